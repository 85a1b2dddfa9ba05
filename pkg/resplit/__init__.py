"""resplit: merge and split Jupyter notebook cells along def-use chains.

Run the command-line tool using::

    uv run resplit both notebook.ipynb -o resplit.ipynb
"""

__version__ = "0.1.0"
