# Sphinx configuration for tibcad.
#
# The API reference under docs/api is regenerated by sphinx-apidoc on every
# build, so it is not kept in version control.
import os
import sys
import inspect

from sphinx.ext import apidoc

__location__ = os.path.join(os.getcwd(), os.path.dirname(
    inspect.getfile(inspect.currentframe())))

sys.path.insert(0, os.path.join(__location__, '../src'))

output_dir = os.path.join(__location__, "api")
module_dir = os.path.join(__location__, "../src/tibcad")
try:
    apidoc.main(["-f", "-o", output_dir, module_dir])
except Exception as e:
    print("Running `sphinx-apidoc` failed!\n{}".format(e))

# -- General configuration ---------------------------------------------------

# Docstrings use "Parameters:" / "Returns:" sections, read by napoleon.
extensions = ['sphinx.ext.autodoc', 'sphinx.ext.intersphinx',
              'sphinx.ext.autosummary', 'sphinx.ext.viewcode',
              'sphinx.ext.mathjax', 'sphinx.ext.napoleon']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'tibcad'
copyright = '2026, tibcad contributors'

try:
    from tibcad import __version__ as version
except ImportError:
    version = ''
release = version

exclude_patterns = ['_build']
pygments_style = 'sphinx'

# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
htmlhelp_basename = 'tibcad-doc'

# -- External mapping --------------------------------------------------------

python_version = '.'.join(map(str, sys.version_info[0:2]))
intersphinx_mapping = {
    'python': ('https://docs.python.org/' + python_version, None),
    'numpy': ('https://numpy.org/doc/stable', None),
    'scipy': ('https://docs.scipy.org/doc/scipy', None),
    'pandas': ('https://pandas.pydata.org/pandas-docs/stable', None),
    'matplotlib': ('https://matplotlib.org/stable', None),
}
