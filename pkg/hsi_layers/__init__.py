import logging

__classification__ = 'UNCLASSIFIED'

# establish logging paradigm
logger = logging.getLogger(__name__)
logger.setLevel(logging.WARNING)
