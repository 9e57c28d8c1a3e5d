"""quboost: heterogeneous weak-learner ensembles pruned by QUBO solvers.

The package trains diverse weak-learner ensembles on historical slices of a
labeled dataset, encodes the selection of a strong sub-ensemble as a QUBO,
and solves that QUBO with several engines: exhaustive search, simulated
annealing, uniform sampling, an emulated neutral-atom register sampled via
random graph loading, a naive analog pulse optimizer, and an MPS
imaginary-time optimizer.  Classification quality is reported as precision
at a fixed recall level.
"""

__version__ = "0.1.0"

from . import bench, classifier, dataset, ising, learners, metrics, qubo, rgs, solvers  # noqa: F401,E402
