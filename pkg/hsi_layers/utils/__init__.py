__classification__ = 'UNCLASSIFIED'
