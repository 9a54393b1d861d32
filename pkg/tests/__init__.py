
__classification__ = 'UNCLASSIFIED'

import unittest
