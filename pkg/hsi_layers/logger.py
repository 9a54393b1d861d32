"""
Logging setup for command line use of the package.
"""

__classification__ = "UNCLASSIFIED"


import logging

LOG_FORMAT = '%(asctime)s %(levelname)-8s %(name)s: %(message)s'


def configure_logging(level=logging.INFO, log_file=None):
    """
    Attach handlers to the package logger. Repeated calls replace the handlers
    attached by a previous call.

    Parameters
    ----------
    level : int|str
        The logging level for the package logger.
    log_file : None|str
        If provided, log lines are also written to this file.

    Returns
    -------
    logging.Logger
        The package logger.
    """

    package_logger = logging.getLogger('hsi_layers')
    for handler in list(package_logger.handlers):
        if getattr(handler, '_hsi_layers_handler', False):
            package_logger.removeHandler(handler)
            handler.close()

    handlers = [logging.StreamHandler()]
    if log_file is not None:
        handlers.append(logging.FileHandler(log_file, mode='w'))

    formatter = logging.Formatter(LOG_FORMAT)
    for handler in handlers:
        handler.setFormatter(formatter)
        handler._hsi_layers_handler = True
        package_logger.addHandler(handler)
    package_logger.setLevel(level)
    return package_logger


def verbosity_to_level(verbosity):
    """
    Maps a count of `-v` flags onto a logging level.

    Parameters
    ----------
    verbosity : int

    Returns
    -------
    int
    """

    if verbosity <= 0:
        return logging.WARNING
    if verbosity == 1:
        return logging.INFO
    return logging.DEBUG
