"""
File naming conventions for the artifacts read and written by this package.
"""

__classification__ = "UNCLASSIFIED"


import os


def _include_uppercase(extensions):
    """
    Builds the list of all lower and all upper case versions of the given
    extension or list of extensions, preserving order.

    Parameters
    ----------
    extensions : str|List[str]
        A space delimited string or list of file extensions.

    Returns
    -------
    List[str]
    """

    if isinstance(extensions, str):
        extensions = extensions.strip().split()

    out = []
    for entry in extensions:
        for version in (entry.lower(), entry.upper()):
            if version not in out:
                out.append(version)
    return out


HEADER_EXTENSIONS = _include_uppercase('.hdr')
RAW_EXTENSIONS = _include_uppercase('.raw')


def raw_path_for_header(header_path, must_exist=True):
    """
    Gets the raw data file companion to the given ENVI header. This is the file
    with the same basename and `.raw` extension (either case).

    Parameters
    ----------
    header_path : str
    must_exist : bool
        If `True`, raise an exception when no companion file exists. Otherwise,
        return the lower case version.

    Returns
    -------
    str
    """

    base, _ = os.path.splitext(header_path)
    for extension in RAW_EXTENSIONS:
        candidate = base + extension
        if os.path.isfile(candidate):
            return candidate
    if must_exist:
        raise FileNotFoundError('No raw data file {} found for header {}'.format(base + '.raw', header_path))
    return base + RAW_EXTENSIONS[0]


def header_path_for(path):
    """
    Gets the header path for a path given either with or without the header extension.

    Parameters
    ----------
    path : str

    Returns
    -------
    str
    """

    base, extension = os.path.splitext(path)
    if extension in HEADER_EXTENSIONS:
        return path
    if extension in RAW_EXTENSIONS:
        return base + HEADER_EXTENSIONS[0]
    return path + HEADER_EXTENSIONS[0]
