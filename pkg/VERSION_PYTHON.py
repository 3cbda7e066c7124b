# minimum supported Python version
__version_minimum_python__ = "3.9"

# maximum supported Python version
__version_maximum_python__ = "3.11"
