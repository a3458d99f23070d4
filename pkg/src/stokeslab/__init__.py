"""Structured-grid Q2-Q1 Stokes solver lab.

Submodules: ``mesh``, ``stencil``, ``assembly``, ``braess_sarazin``, ``vanka``,
``multigrid``, ``krylov``, ``block_triangular``, ``perfmodel``, ``solvers`` and
``cli``.  The package namespace itself stays light so the command-line tool
can set thread counts before numpy is loaded.
"""

__version__ = "0.1.0"
