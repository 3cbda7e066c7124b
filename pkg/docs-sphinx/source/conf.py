# Configuration file for the Sphinx documentation builder.
#
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Path setup --------------------------------------------------------------

import sys
from datetime import date
from pathlib import Path

root_path = Path(__file__).parent.parent.parent
sys.path.insert(0, str(root_path))

from VERSION import __version__  # noqa

# -- Project information -----------------------------------------------------

project = "CompSim"
# noinspection PyShadowingBuiltins
copyright = f"{date.today().year}, CompSim Developers"
author = "CompSim Developers"

version = __version__
release = __version__

# -- General configuration ---------------------------------------------------

suppress_warnings = [
    "toc.circular",
    "myst.header"
]

extensions = [
    "sphinx.ext.autodoc",  # autogenerate documentation from docstrings
    "sphinx.ext.napoleon",  # support google style docstrings
    "sphinx.ext.autosummary",  # recursively document compsim and test
    "sphinx.ext.intersphinx",  # link numpy, torch and python types
    "sphinx.ext.viewcode",  # add links to the Python source code
    "sphinx_autodoc_typehints",  # document param types from annotations
    "sphinx_rtd_dark_mode",  # toggleable dark mode for the ReadTheDocs theme
    "myst_parser"  # README.md is included into index.rst
]

templates_path = ["_templates"]
exclude_patterns = []

# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
html_theme_options = {
    "display_version": True,
    "prev_next_buttons_location": "both",
    "collapse_navigation": False,
    "sticky_navigation": True,
    "navigation_depth": -1,
    "includehidden": True,
    "titles_only": False
}
html_show_sourcelink = False
pygments_style = "friendly"

# -- Extension configuration -------------------------------------------------

intersphinx_mapping = {
    "python": ("https://docs.python.org/3/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "torch": ("https://pytorch.org/docs/stable/", None),
}

autosummary_generate = True
autoclass_content = "both"  # class summaries include the __init__ Args and Attributes
autodoc_inherit_docstrings = True
set_type_checking_flag = True
add_module_names = False

myst_heading_anchors = 6
