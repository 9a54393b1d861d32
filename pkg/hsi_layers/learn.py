"""
A random forest classifier, the repeated hold-out evaluation protocol, and
the overall accuracy (OA), average accuracy (AA) and Kappa metrics.

The forest is deterministic given its seed. Tree `t` draws from its own
random stream seeded by `(seed, t)`, so that training order and thread count
do not change the result. Splits minimize the weighted Gini impurity, with
thresholds at midpoints between consecutive distinct values, and ties broken
by lowest feature index and then lowest threshold.
"""

__classification__ = "UNCLASSIFIED"


import json
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy
import pandas
from sklearn.metrics import confusion_matrix

from hsi_layers.base_elements import BooleanDescriptor, ConfigBase, IntegerDescriptor
from hsi_layers.cube import as_feature_stack

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ('feature', 'aa_mean', 'aa_sd', 'oa_mean', 'oa_sd', 'kappa_mean', 'kappa_sd')


###########
# data

class LabeledPixels(object):
    """
    Labeled samples, with class ids `0..C-1`.
    """

    __slots__ = ('_features', '_labels', '_class_names', '_indices')

    def __init__(self, features, labels, class_names=None, indices=None):
        """

        Parameters
        ----------
        features : numpy.ndarray
            The `(N, d)` sample features.
        labels : numpy.ndarray
            The `N` integer class ids.
        class_names : None|Sequence[str]
            The names of the classes, which fix the class count `C`. Otherwise
            `C` is one more than the largest label.
        indices : None|numpy.ndarray
            The `N` sample indices into the collection these were drawn from.
        """

        features = numpy.asarray(features)
        labels = numpy.asarray(labels)
        if features.ndim != 2:
            raise ValueError('Features must be an (N, d) array, got shape {}'.format(features.shape))
        if labels.ndim != 1 or labels.size != features.shape[0]:
            raise ValueError('Got {} labels for {} feature rows'.format(labels.size, features.shape[0]))
        if labels.size > 0:
            if not numpy.issubdtype(labels.dtype, numpy.integer):
                raise TypeError('Labels must be integers, got dtype {}'.format(labels.dtype))
            if labels.min() < 0:
                raise ValueError('Labels must be non-negative')
        if class_names is None:
            count = int(labels.max()) + 1 if labels.size > 0 else 0
            class_names = ['class_{}'.format(i) for i in range(count)]
        class_names = tuple(str(entry) for entry in class_names)
        if labels.size > 0 and labels.max() >= len(class_names):
            raise ValueError('Label {} exceeds the {} classes'.format(labels.max(), len(class_names)))
        if indices is None:
            indices = numpy.arange(labels.size)
        indices = numpy.asarray(indices, dtype='int64')
        if indices.shape != labels.shape:
            raise ValueError('Got {} indices for {} samples'.format(indices.size, labels.size))
        self._features = features
        self._labels = labels.astype('int64')
        self._class_names = class_names
        self._indices = indices

    @property
    def features(self):
        return self._features

    @property
    def labels(self):
        return self._labels

    @property
    def class_names(self):
        return self._class_names

    @property
    def n_classes(self):
        return len(self._class_names)

    @property
    def indices(self):
        return self._indices

    @property
    def size(self):
        return self._labels.size

    def subset(self, positions):
        """
        Gets the samples at the given positions.

        Parameters
        ----------
        positions : numpy.ndarray

        Returns
        -------
        LabeledPixels
        """

        return LabeledPixels(self._features[positions], self._labels[positions],
                             class_names=self._class_names, indices=self._indices[positions])

    def class_sizes(self):
        return numpy.bincount(self._labels, minlength=self.n_classes)


def sample_split(data, per_class, seed):
    """
    Split into training and test samples, drawing exactly `per_class` training
    samples of every class uniformly without replacement. The remaining samples
    are the test samples. Both keep the original sample order.

    Parameters
    ----------
    data : LabeledPixels
    per_class : int
    seed : int

    Returns
    -------
    (LabeledPixels, LabeledPixels)
    """

    if per_class < 1:
        raise ValueError('per_class must be positive, got {}'.format(per_class))
    rng = numpy.random.default_rng(seed)
    chosen = []
    for class_id in range(data.n_classes):
        members = numpy.nonzero(data.labels == class_id)[0]
        if members.size <= per_class:
            msg = 'Class {} ({}) has {} samples, more than {} are required'.format(
                class_id, data.class_names[class_id], members.size, per_class)
            logger.error(msg)
            raise ValueError(msg)
        chosen.append(rng.choice(members, size=per_class, replace=False))
    train_positions = numpy.sort(numpy.concatenate(chosen))
    is_train = numpy.zeros(data.size, dtype='bool')
    is_train[train_positions] = True
    return data.subset(train_positions), data.subset(numpy.nonzero(~is_train)[0])


###########
# the forest

def _best_feature_split(values, onehot_labels):
    """
    Gets the lowest weighted Gini impurity split of one feature, or `None`
    when all values are equal.

    Parameters
    ----------
    values : numpy.ndarray
    onehot_labels : numpy.ndarray
        The `(n, C)` integer indicator array of the sample classes.

    Returns
    -------
    None|(float, float)
        The weighted impurity and the threshold.
    """

    order = numpy.argsort(values, kind='stable')
    ordered = values[order]
    valid = ordered[1:] > ordered[:-1]
    if not numpy.any(valid):
        return None

    count = values.size
    left = numpy.cumsum(onehot_labels[order], axis=0)[:-1]
    right = left[-1] + onehot_labels[order[-1]] - left
    left_size = numpy.arange(1, count, dtype='float64')
    right_size = count - left_size
    weighted = (left_size - (left*left).sum(axis=1)/left_size
                + right_size - (right*right).sum(axis=1)/right_size)/count
    weighted[~valid] = numpy.inf
    best = int(numpy.argmin(weighted))
    threshold = 0.5*(ordered[best] + ordered[best + 1])
    if not (ordered[best] <= threshold < ordered[best + 1]):
        threshold = ordered[best]
    return float(weighted[best]), float(threshold)


class DecisionTree(object):
    """
    A binary classification tree held as node arrays. A sample goes to the
    left child when `x[feature] <= threshold`; leaves have feature -1.
    """

    __slots__ = ('feature', 'threshold', 'left', 'right', 'counts', 'node_class', 'impurity_decrease')

    def __init__(self, feature, threshold, left, right, counts, impurity_decrease=0.0):
        """

        Parameters
        ----------
        feature : numpy.ndarray
        threshold : numpy.ndarray
        left : numpy.ndarray
        right : numpy.ndarray
        counts : numpy.ndarray
            The `(nodes, C)` training class counts of each node.
        impurity_decrease : float
            The total sample weighted impurity decrease of all splits.
        """

        self.feature = numpy.asarray(feature, dtype='int64')
        self.threshold = numpy.asarray(threshold, dtype='float64')
        self.left = numpy.asarray(left, dtype='int64')
        self.right = numpy.asarray(right, dtype='int64')
        self.counts = numpy.asarray(counts, dtype='int64')
        self.node_class = numpy.argmax(self.counts, axis=1)
        self.impurity_decrease = float(impurity_decrease)

    @property
    def node_count(self):
        return self.feature.size

    @property
    def depth(self):
        depths = numpy.zeros(self.node_count, dtype='int64')
        for node in range(self.node_count):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def leaves(self):
        return numpy.nonzero(self.feature < 0)[0]

    def apply(self, features):
        """
        Gets the leaf reached by each sample.

        Parameters
        ----------
        features : numpy.ndarray
            The `(N, d)` samples.

        Returns
        -------
        numpy.ndarray
        """

        node = numpy.zeros(features.shape[0], dtype='int64')
        active = numpy.arange(features.shape[0])
        while active.size > 0:
            split_feature = self.feature[node[active]]
            internal = split_feature >= 0
            active = active[internal]
            if active.size == 0:
                break
            current = node[active]
            go_left = features[active, split_feature[internal]] <= self.threshold[current]
            node[active] = numpy.where(go_left, self.left[current], self.right[current])
        return node

    def predict(self, features):
        return self.node_class[self.apply(features)]


def _grow_tree(features, labels, n_classes, mtry, rng):
    """
    Grow a tree until every leaf is pure or admits no split.

    Parameters
    ----------
    features : numpy.ndarray
    labels : numpy.ndarray
    n_classes : int
    mtry : int
    rng : numpy.random.Generator

    Returns
    -------
    DecisionTree
    """

    dimension = features.shape[1]
    onehot = numpy.eye(n_classes, dtype='int64')[labels]
    split_feature, split_threshold, left, right, counts = [], [], [], [], []
    impurity_decrease = 0.0

    def new_node(samples):
        split_feature.append(-1)
        split_threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(numpy.bincount(labels[samples], minlength=n_classes))
        return len(split_feature) - 1

    pending = [(new_node(numpy.arange(labels.size)), numpy.arange(labels.size))]
    while len(pending) > 0:
        node, samples = pending.pop()
        if numpy.count_nonzero(counts[node]) <= 1:
            continue

        best = None
        evaluated = 0
        for candidate in rng.permutation(dimension):
            evaluated += 1
            result = _best_feature_split(features[samples, candidate], onehot[samples])
            if result is not None:
                entry = (result[0], int(candidate), result[1])
                if best is None or entry < best:
                    best = entry
            if evaluated >= mtry and best is not None:
                break
        if best is None:
            continue

        impurity, feature_index, threshold = best
        size = samples.size
        node_impurity = 1.0 - float(numpy.sum((counts[node]/float(size))**2))
        impurity_decrease += size*(node_impurity - impurity)
        go_left = features[samples, feature_index] <= threshold
        left_node = new_node(samples[go_left])
        right_node = new_node(samples[~go_left])
        split_feature[node] = feature_index
        split_threshold[node] = threshold
        left[node] = left_node
        right[node] = right_node
        pending.append((right_node, samples[~go_left]))
        pending.append((left_node, samples[go_left]))

    return DecisionTree(split_feature, split_threshold, left, right, numpy.array(counts),
                        impurity_decrease=impurity_decrease)


class ForestModel(object):
    """
    A trained random forest.
    """

    def __init__(self, trees, n_classes, n_features, mtry, seed, bootstrap=True):
        """

        Parameters
        ----------
        trees : Sequence[DecisionTree]
        n_classes : int
        n_features : int
        mtry : int
        seed : int
        bootstrap : bool
        """

        if len(trees) < 1:
            raise ValueError('A forest requires at least one tree')
        if not (1 <= mtry <= n_features):
            raise ValueError('mtry must lie in [1, {}], got {}'.format(n_features, mtry))
        self.trees = list(trees)
        self.n_classes = int(n_classes)
        self.n_features = int(n_features)
        self.mtry = int(mtry)
        self.seed = int(seed)
        self.bootstrap = bool(bootstrap)

    @property
    def tree_count(self):
        return len(self.trees)

    def votes(self, features):
        """
        Gets the per-class tree vote counts.

        Parameters
        ----------
        features : numpy.ndarray
            The `(N, d)` samples.

        Returns
        -------
        numpy.ndarray
            The `(N, C)` vote counts.
        """

        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise ValueError('Expected samples with {} features, got shape {}'.format(
                self.n_features, features.shape))
        out = numpy.zeros((features.shape[0], self.n_classes), dtype='int64')
        rows = numpy.arange(features.shape[0])
        for tree in self.trees:
            out[rows, tree.predict(features)] += 1
        return out

    def predict(self, features):
        """
        Gets the majority vote class, ties going to the lowest class id.

        Parameters
        ----------
        features : numpy.ndarray

        Returns
        -------
        numpy.ndarray
        """

        return numpy.argmax(self.votes(features), axis=1)


def train_forest(data, trees=10, seed=0, mtry=None, bootstrap=True, n_jobs=1):
    """
    Train a random forest. Each tree is grown on a bootstrap sample, and each
    node considers `mtry` randomly chosen features (more, if none of those
    admits a split).

    Parameters
    ----------
    data : LabeledPixels
    trees : int
    seed : int
        The master seed; tree `t` uses the stream seeded by `(seed, t)`.
    mtry : None|int
        Defaults to `max(1, floor(sqrt(d)))`.
    bootstrap : bool
        Disable to grow every tree on all samples.
    n_jobs : int
        The number of worker threads across trees.

    Returns
    -------
    ForestModel
    """

    if data.size == 0:
        raise ValueError('Cannot train on empty data')
    if numpy.count_nonzero(data.class_sizes()) < 2:
        raise ValueError('Training requires at least two classes present')
    if trees < 1:
        raise ValueError('trees must be positive, got {}'.format(trees))
    features = numpy.ascontiguousarray(data.features)
    dimension = features.shape[1]
    if mtry is None:
        mtry = max(1, int(numpy.floor(numpy.sqrt(dimension))))

    def grow(tree_index):
        rng = numpy.random.default_rng([seed, tree_index])
        if bootstrap:
            samples = rng.integers(0, data.size, size=data.size)
        else:
            samples = numpy.arange(data.size)
        tree = _grow_tree(features[samples], data.labels[samples], data.n_classes, mtry, rng)
        logger.debug('Tree {} has {} nodes, depth {}, impurity decrease {:.3f}'.format(
            tree_index, tree.node_count, tree.depth, tree.impurity_decrease))
        return tree

    if n_jobs is not None and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as executor:
            grown = list(executor.map(grow, range(trees)))
    else:
        grown = [grow(index) for index in range(trees)]
    return ForestModel(grown, data.n_classes, dimension, mtry, seed, bootstrap=bootstrap)


def predict(model, features):
    """
    Gets the forest majority vote class of each sample.

    Parameters
    ----------
    model : ForestModel
    features : numpy.ndarray

    Returns
    -------
    numpy.ndarray
    """

    return model.predict(numpy.asarray(features))


###########
# metrics

class ConfusionMatrix(object):
    """
    Class counts, with rows the true class and columns the predicted class.
    """

    __slots__ = ('_counts', )

    def __init__(self, counts):
        counts = numpy.array(counts, dtype='int64')
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] < 1:
            raise ValueError('A confusion matrix must be square and non-empty, got shape {}'.format(counts.shape))
        if numpy.any(counts < 0):
            raise ValueError('Confusion matrix counts must be non-negative')
        counts.flags.writeable = False
        self._counts = counts

    @classmethod
    def from_labels(cls, truth, predicted, n_classes):
        """
        Construct from true and predicted class ids.

        Parameters
        ----------
        truth : numpy.ndarray
        predicted : numpy.ndarray
        n_classes : int

        Returns
        -------
        ConfusionMatrix
        """

        return cls(confusion_matrix(truth, predicted, labels=numpy.arange(n_classes)))

    @property
    def counts(self):
        return self._counts

    @property
    def n_classes(self):
        return self._counts.shape[0]

    @property
    def total(self):
        return int(self._counts.sum())

    def tolist(self):
        return self._counts.tolist()


def metrics(cm):
    """
    Gets the overall accuracy, the average of the per-class accuracies, and
    Cohen's Kappa `(p_o - p_e)/(1 - p_e)`.

    Parameters
    ----------
    cm : ConfusionMatrix|numpy.ndarray

    Returns
    -------
    (float, float, float)
    """

    if not isinstance(cm, ConfusionMatrix):
        cm = ConfusionMatrix(cm)
    counts = cm.counts
    total = cm.total
    if total == 0:
        raise ValueError('Metrics are undefined for an empty confusion matrix')
    row_sums = counts.sum(axis=1)
    if numpy.any(row_sums == 0):
        raise ValueError('Average accuracy is undefined, classes {} have no samples'.format(
            numpy.nonzero(row_sums == 0)[0].tolist()))
    trace = int(numpy.trace(counts))
    overall = trace/float(total)
    average = float(numpy.mean(numpy.diag(counts)/row_sums.astype('float64')))
    # integer form of (p_o - p_e)/(1 - p_e), scaled by total**2
    chance = int(numpy.dot(row_sums, counts.sum(axis=0)))
    denominator = total*total - chance
    if denominator == 0:
        kappa = 1.0 if trace == total else 0.0
    else:
        kappa = (total*trace - chance)/float(denominator)
    return overall, average, kappa


###########
# evaluation protocol

class Protocol(ConfigBase):
    """
    The repeated hold-out evaluation protocol.
    """

    _fields = ('per_class', 'repeats', 'trees', 'seed', 'bootstrap', 'n_jobs')
    per_class = IntegerDescriptor(
        'per_class', default_value=100, bounds=(1, None),
        docstring='Training samples drawn per class.')  # type: int
    repeats = IntegerDescriptor(
        'repeats', default_value=25, bounds=(1, None), docstring='Number of repeats.')  # type: int
    trees = IntegerDescriptor(
        'trees', default_value=10, bounds=(1, None), docstring='Trees per forest.')  # type: int
    seed = IntegerDescriptor(
        'seed', default_value=0, bounds=(0, None),
        docstring='Base seed; repeat r uses seed + r for both split and forest.')  # type: int
    bootstrap = BooleanDescriptor(
        'bootstrap', default_value=True, docstring='Bagging of the tree training samples.')  # type: bool
    n_jobs = IntegerDescriptor(
        'n_jobs', default_value=1, bounds=(1, None), docstring='Worker threads across repeats.')  # type: int


class EvalReport(object):
    """
    The outcome of the repeated evaluation of one feature stack.
    """

    def __init__(self, feature, chain, class_names, protocol, seeds, confusion_matrices, label_map=None):
        """

        Parameters
        ----------
        feature : str
            The feature variant name.
        chain : None|str
            The processing chain description of the feature stack.
        class_names : Sequence[str]
        protocol : Protocol
        seeds : Sequence[int]
            The seed of each repeat.
        confusion_matrices : Sequence[ConfusionMatrix]
        label_map : None|numpy.ndarray
            The full image prediction of the first repeat, with 0 background
            and classes `1..C`.
        """

        if len(seeds) != len(confusion_matrices):
            raise ValueError('Got {} seeds for {} confusion matrices'.format(len(seeds), len(confusion_matrices)))
        self.feature = feature
        self.chain = chain
        self.class_names = tuple(class_names)
        self.protocol = protocol
        self.seeds = [int(entry) for entry in seeds]
        self.confusion_matrices = list(confusion_matrices)
        self.label_map = label_map
        values = numpy.array([metrics(cm) for cm in self.confusion_matrices], dtype='float64').reshape((-1, 3))
        self.oa = values[:, 0]
        self.aa = values[:, 1]
        self.kappa = values[:, 2]

    @property
    def repeats(self):
        return len(self.confusion_matrices)

    def statistics(self):
        """
        Gets the mean and (population) standard deviation over repeats of each metric.

        Returns
        -------
        dict
        """

        out = {}
        for name, values in (('aa', self.aa), ('oa', self.oa), ('kappa', self.kappa)):
            out['{}_mean'.format(name)] = float(numpy.mean(values))
            out['{}_sd'.format(name)] = float(numpy.std(values, ddof=0))
        return out

    def summary_row(self):
        """
        Gets the summary table row, with AA and OA in percent.

        Returns
        -------
        dict
        """

        stats = self.statistics()
        row = {'feature': self.feature}
        for key in SUMMARY_COLUMNS[1:]:
            scale = 1.0 if key.startswith('kappa') else 100.0
            row[key] = scale*stats[key]
        return row

    def to_dict(self):
        return {
            'feature': self.feature,
            'chain': self.chain,
            'class_names': list(self.class_names),
            'protocol': self.protocol.to_dict(),
            'repeats': self.repeats,
            'seeds': self.seeds,
            'confusion_matrices': [cm.tolist() for cm in self.confusion_matrices],
            'oa': self.oa.tolist(),
            'aa': self.aa.tolist(),
            'kappa': self.kappa.tolist(),
            'statistics': self.statistics()}

    @classmethod
    def from_dict(cls, the_dict):
        return cls(the_dict['feature'], the_dict.get('chain', None), the_dict['class_names'],
                   Protocol.from_dict(the_dict['protocol']), the_dict['seeds'],
                   [ConfusionMatrix(entry) for entry in the_dict['confusion_matrices']])

    def to_json_file(self, fname):
        """
        Write the full report as json.

        Parameters
        ----------
        fname : str
        """

        with open(fname, 'w') as fi:
            json.dump(self.to_dict(), fi, indent=1)

    @classmethod
    def from_json_file(cls, fname):
        with open(fname, 'r') as fi:
            return cls.from_dict(json.load(fi))

    def __repr__(self):
        stats = self.statistics()
        return 'EvalReport(feature={!r}, repeats={}, aa={:.4f}, oa={:.4f}, kappa={:.4f})'.format(
            self.feature, self.repeats, stats['aa_mean'], stats['oa_mean'], stats['kappa_mean'])


def summary_frame(reports):
    """
    Gets the summary table of several reports, one row per report.

    Parameters
    ----------
    reports : Sequence[EvalReport]

    Returns
    -------
    pandas.DataFrame
    """

    return pandas.DataFrame([report.summary_row() for report in reports], columns=list(SUMMARY_COLUMNS))


def labeled_pixels(features, labels, class_names=None):
    """
    Gets the labeled (non-background) pixels of a label map, where label 0 is
    background and labels `1..C` become class ids `0..C-1`.

    Parameters
    ----------
    features : HsiCube|FeatureStack
    labels : numpy.ndarray
    class_names : None|Sequence[str]

    Returns
    -------
    LabeledPixels
        With indices the flat pixel positions.
    """

    stack = as_feature_stack(features)
    labels = numpy.asarray(labels)
    if labels.shape != stack.spatial_shape:
        raise ValueError('Label map shape {} does not match the feature shape {}'.format(
            labels.shape, stack.spatial_shape))
    if labels.size > 0 and labels.min() < 0:
        raise ValueError('Label maps must be non-negative')
    flat = labels.ravel().astype('int64')
    foreground = numpy.nonzero(flat > 0)[0]
    if class_names is None:
        class_names = ['class_{}'.format(i + 1) for i in range(int(flat.max()) if flat.size > 0 else 0)]
    return LabeledPixels(numpy.ascontiguousarray(stack.pixels()[foreground]), flat[foreground] - 1,
                         class_names=class_names, indices=foreground)


def evaluate(features, labels, protocol=None, class_names=None, feature_name=None):
    """
    Evaluate a feature stack against a label map. For every repeat `r`, the
    labeled pixels are split with seed `seed + r`, a forest is trained with the
    same seed and the test pixels are predicted.

    Parameters
    ----------
    features : HsiCube|FeatureStack
    labels : numpy.ndarray
        The `(rows, cols)` label map, 0 being background.
    protocol : None|Protocol
    class_names : None|Sequence[str]
    feature_name : None|str

    Returns
    -------
    EvalReport
        With the label map predicted by the first repeat's forest.
    """

    if protocol is None:
        protocol = Protocol()
    stack = as_feature_stack(features)
    data = labeled_pixels(stack, labels, class_names=class_names)
    logger.info('Evaluating {} features on {} labeled pixels, class sizes {}, {} repeats'.format(
        stack.channels, data.size, data.class_sizes().tolist(), protocol.repeats))

    def run(repeat):
        seed = protocol.seed + repeat
        train, test = sample_split(data, protocol.per_class, seed)
        forest = train_forest(train, trees=protocol.trees, seed=seed, bootstrap=protocol.bootstrap)
        cm = ConfusionMatrix.from_labels(test.labels, forest.predict(test.features), data.n_classes)
        return seed, cm, forest

    if protocol.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=protocol.n_jobs) as executor:
            results = list(executor.map(run, range(protocol.repeats)))
    else:
        results = [run(repeat) for repeat in range(protocol.repeats)]

    first_forest = results[0][2]
    predicted = first_forest.predict(stack.pixels()) + 1
    label_map = numpy.where(numpy.asarray(labels).ravel() > 0, predicted, 0).reshape(stack.spatial_shape)
    report = EvalReport(feature_name if feature_name is not None else (stack.chain or 'features'),
                        stack.chain, data.class_names, protocol,
                        [seed for seed, _, _ in results], [cm for _, cm, _ in results], label_map=label_map)
    logger.info('Evaluated {!r}'.format(report))
    return report
