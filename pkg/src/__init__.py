# chaossync - dual combination-combination multi-switching synchronization
__version__ = "1.0.0"
