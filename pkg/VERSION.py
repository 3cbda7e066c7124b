# DO NOT EDIT - VERSIONING CONTROLLED BY GIT TAGS
__version__ = "v0.1.0"
