"""
Typed attribute descriptors, and the serializable configuration base built on them.
"""

__classification__ = "UNCLASSIFIED"


import json
import logging
from weakref import WeakKeyDictionary

logger = logging.getLogger(__name__)


def _convert(val, converter, kind, name, instance):
    """
    Convert the input with the given converter, logging the failure before re-raising.

    Parameters
    ----------
    val
        The prospective value.
    converter : callable
    kind : str
        Descriptive name of the target type, for the log message.
    name : str
        The bound variable name.
    instance
        The instance to which the variable belongs.

    Returns
    -------
    object
    """

    try:
        return converter(val)
    except Exception:
        logger.error(
            'Tried to convert value {} to {} value for attribute {} '
            'of class {}'.format(val, kind, name, instance.__class__.__name__))
        raise


def _check_bounds(val, bounds, name, instance):
    """
    Verify that a numeric value lies in the inclusive bounds.

    Parameters
    ----------
    val : int|float
    bounds : None|tuple
        Inclusive `(lower, upper)`, where either entry may be `None`.
    name : str
    instance
    """

    if bounds is None:
        return
    lower, upper = bounds
    if (lower is not None and val < lower) or (upper is not None and val > upper):
        raise ValueError(
            'Attribute {} of class {} must lie in [{}, {}], got {}'.format(
                name, instance.__class__.__name__, lower, upper, val))


def _validate_tuple_length(tup_length, length, name, instance):
    """
    Verify that a tuple length complies with the given length allowance.

    Parameters
    ----------
    tup_length : int
        The tuple length
    length : None|int|tuple
        If `None`, then no limit. If `int`, then the required length. If `tuple`,
        then inclusive `(lower, upper)` bounds for the length.
    name : str
        The bound variable name.
    instance
        The instance to which the variable belongs.
    """

    if length is None:
        return
    if isinstance(length, int):
        ok = (tup_length == length)
    elif isinstance(length, tuple) and len(length) == 2:
        ok = (length[0] <= tup_length <= length[1])
    else:
        raise TypeError('Got unexpected type {} for length value.'.format(type(length)))
    if not ok:
        raise ValueError(
            'The value for attribute {} of class {} must be a tuple of length {}, '
            'and we got length {}'.format(name, instance.__class__.__name__, length, tup_length))


class BasicDescriptor(object):
    """
    A descriptor object for reusable, validated properties. Note that it is
    required that the calling instance is hashable.
    """

    _typ_string = None

    def __init__(self, name, default_value=None, docstring=''):
        """

        Parameters
        ----------
        name : str
            The attribute name.
        default_value
            The value returned, and stored, when the attribute is unset or set to `None`.
        docstring : str
            The docstring.
        """

        self.data = WeakKeyDictionary()
        self.name = name
        self._default_value = default_value

        docstring = '' if docstring is None else docstring
        if self._typ_string is not None and not docstring.startswith(self._typ_string):
            docstring = '{} {}'.format(self._typ_string, docstring)
        if default_value is not None:
            docstring = '{} Default value is :code:`{}`.'.format(docstring, default_value)
        self.__doc__ = docstring

    @property
    def default_value(self):
        return self._default_value

    def __get__(self, instance, owner):
        if instance is None:
            # accessed on the class
            return self
        return self.data.get(instance, self._default_value)

    def __set__(self, instance, value):
        if value is None:
            self.data[instance] = self._default_value
        else:
            self.data[instance] = self._validate(instance, value)

    def _validate(self, instance, value):
        """
        Convert and validate a non-`None` value. Extensions override this.
        """

        return value


class BooleanDescriptor(BasicDescriptor):
    """
    A descriptor for boolean type.
    """

    _typ_string = 'bool:'

    def _validate(self, instance, value):
        return _convert(value, bool, 'a boolean', self.name, instance)


class IntegerDescriptor(BasicDescriptor):
    """
    A descriptor for integer type, with optional inclusive bounds.
    """

    _typ_string = 'int:'

    def __init__(self, name, default_value=None, bounds=None, docstring=None):
        self.bounds = bounds
        super(IntegerDescriptor, self).__init__(name, default_value=default_value, docstring=docstring)

    def _validate(self, instance, value):
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(
                'Attribute {} of class {} requires an integer, got {}'.format(
                    self.name, instance.__class__.__name__, value))
        iv = _convert(value, int, 'an integer', self.name, instance)
        _check_bounds(iv, self.bounds, self.name, instance)
        return iv


class FloatDescriptor(BasicDescriptor):
    """
    A descriptor for float type, with optional inclusive bounds.
    """

    _typ_string = 'float:'

    def __init__(self, name, default_value=None, bounds=None, docstring=None):
        self.bounds = bounds
        super(FloatDescriptor, self).__init__(name, default_value=default_value, docstring=docstring)

    def _validate(self, instance, value):
        fv = _convert(value, float, 'a float', self.name, instance)
        _check_bounds(fv, self.bounds, self.name, instance)
        return fv


class StringDescriptor(BasicDescriptor):
    """
    A descriptor for string type
    """

    _typ_string = 'str:'

    def _validate(self, instance, value):
        if isinstance(value, str):
            return value
        return _convert(value, str, 'a str', self.name, instance)


class StringEnumDescriptor(BasicDescriptor):
    """
    A descriptor for enumerated (specified) string type. **The valid entries are
    case-sensitive.**
    """

    _typ_string = 'str:'

    def __init__(self, name, values, default_value=None, docstring=None):
        self.values = tuple(values)
        if default_value is not None and default_value not in self.values:
            raise ValueError('Default value {} is not one of {}'.format(default_value, self.values))
        docstring = '' if docstring is None else docstring
        docstring = '{} Takes values in :code:`{}`.'.format(docstring, self.values)
        super(StringEnumDescriptor, self).__init__(name, default_value=default_value, docstring=docstring)

    def _validate(self, instance, value):
        val = str(value).strip()
        if val not in self.values:
            msg = 'Attribute {} of class {} received {}, but values ARE REQUIRED to be ' \
                  'one of {}'.format(self.name, instance.__class__.__name__, value, self.values)
            logger.error(msg)
            raise ValueError(msg)
        return val


class _TupleDescriptor(BasicDescriptor):
    """
    Common base for tuples of converted entries.
    """

    _typ_string = 'tuple:'
    _converter = None
    _kind = None

    def __init__(self, name, length=None, default_value=None, docstring=None):
        self._length = length
        super(_TupleDescriptor, self).__init__(name, default_value=default_value, docstring=docstring)

    def _validate(self, instance, value):
        if isinstance(value, (str, bytes)):
            raise TypeError(
                'Attribute {} of class {} requires a sequence, got a string'.format(
                    self.name, instance.__class__.__name__))
        out = tuple(_convert(entry, self._converter, self._kind, self.name, instance) for entry in value)
        _validate_tuple_length(len(out), self._length, self.name, instance)
        return out


class IntegerTupleDescriptor(_TupleDescriptor):
    """
    A descriptor for a tuple of integer type.
    """

    _typ_string = 'Tuple[int, ...]:'
    _converter = int
    _kind = 'an integer'


class FloatTupleDescriptor(_TupleDescriptor):
    """
    A descriptor for a tuple of float type.
    """

    _typ_string = 'Tuple[float, ...]:'
    _converter = float
    _kind = 'a float'


class StringTupleDescriptor(_TupleDescriptor):
    """
    A descriptor for a tuple of string type, optionally from an enumerated collection.
    """

    _typ_string = 'Tuple[str, ...]:'
    _converter = str
    _kind = 'a str'

    def __init__(self, name, length=None, values=None, default_value=None, docstring=None):
        self.values = None if values is None else tuple(values)
        super(StringTupleDescriptor, self).__init__(
            name, length=length, default_value=default_value, docstring=docstring)

    def _validate(self, instance, value):
        out = super(StringTupleDescriptor, self)._validate(instance, value)
        if self.values is not None:
            bad = [entry for entry in out if entry not in self.values]
            if len(bad) > 0:
                msg = 'Attribute {} of class {} got entries {}, which are not among ' \
                      '{}'.format(self.name, instance.__class__.__name__, bad, self.values)
                logger.error(msg)
                raise ValueError(msg)
        return out


class FloatPairTupleDescriptor(_TupleDescriptor):
    """
    A descriptor for a tuple of `(float, float)` pairs, such as the knots of a
    piecewise linear curve.
    """

    _typ_string = 'Tuple[Tuple[float, float], ...]:'
    _kind = 'a float pair'

    @staticmethod
    def _converter(entry):
        pair = tuple(float(value) for value in entry)
        if len(pair) != 2:
            raise ValueError('Expected a pair, got {}'.format(entry))
        return pair


class TypedDescriptor(BasicDescriptor):
    """
    A descriptor for a specified type. If the type is a :class:`ConfigBase`
    extension, then a dictionary is accepted and converted.
    """

    def __init__(self, name, the_type, default_value=None, docstring=None):
        self.the_type = the_type
        self._typ_string = '{}:'.format(the_type.__name__)
        super(TypedDescriptor, self).__init__(name, default_value=default_value, docstring=docstring)

    def _validate(self, instance, value):
        if isinstance(value, self.the_type):
            return value
        if issubclass(self.the_type, ConfigBase) and isinstance(value, dict):
            return self.the_type.from_dict(value)
        raise TypeError(
            'The attribute {} of class {} is required to be an instance of type {}, '
            'but we got type {}'.format(self.name, instance.__class__.__name__, self.the_type, type(value)))


def _plain(value):
    """
    Reduce a configuration value to json friendly built-in types.
    """

    if isinstance(value, ConfigBase):
        return value.to_dict()
    if isinstance(value, (tuple, list)):
        return [_plain(entry) for entry in value]
    if isinstance(value, dict):
        return {str(key): _plain(entry) for key, entry in value.items()}
    return value


class ConfigBase(object):
    """
    Base for configuration objects whose attributes are descriptors. Extensions
    list the descriptor attribute names in `_fields`, which fixes both the
    accepted keyword arguments and the serialization order.
    """

    _fields = ()

    def __init__(self, **kwargs):
        unknown = [key for key in kwargs if key not in self._fields]
        if len(unknown) > 0:
            raise ValueError(
                'Class {} got unexpected configuration keys {}. Accepted keys are '
                '{}'.format(self.__class__.__name__, unknown, self._fields))
        for field in self._fields:
            setattr(self, field, kwargs.get(field, None))

    def to_dict(self):
        """
        Gets the json friendly dictionary of all fields.

        Returns
        -------
        dict
        """

        return {field: _plain(getattr(self, field)) for field in self._fields}

    @classmethod
    def from_dict(cls, the_dict):
        """
        Construct from a dictionary, as produced by :meth:`to_dict`.

        Parameters
        ----------
        the_dict : dict

        Returns
        -------
        ConfigBase
        """

        if not isinstance(the_dict, dict):
            raise TypeError('Expected a dict, got type {}'.format(type(the_dict)))
        return cls(**the_dict)

    def replace(self, **kwargs):
        """
        Gets a copy with the given fields replaced. `None` valued overrides are ignored.

        Returns
        -------
        ConfigBase
        """

        the_dict = self.to_dict()
        the_dict.update({key: value for key, value in kwargs.items() if value is not None})
        return self.from_dict(the_dict)

    def to_json(self, indent=1):
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_json(cls, json_string):
        return cls.from_dict(json.loads(json_string))

    def to_json_file(self, fname):
        """
        Write the json serialization to a file.

        Parameters
        ----------
        fname : str
        """

        with open(fname, 'w') as fi:
            fi.write(self.to_json())

    @classmethod
    def from_json_file(cls, fname):
        """
        Read the configuration from a json file.

        Parameters
        ----------
        fname : str

        Returns
        -------
        ConfigBase
        """

        with open(fname, 'r') as fi:
            return cls.from_json(fi.read())

    def __repr__(self):
        return '{}({})'.format(
            self.__class__.__name__,
            ', '.join('{}={!r}'.format(field, getattr(self, field)) for field in self._fields))
