"""
Message-passing state-space models (MP-SSM) for graphs, with executable checks of their
sensitivity properties.

# Basic strategy

A block runs a *linear* recurrence over the graph shift operator ``A`` (the symmetrically
normalised adjacency with self-loops) and only then applies a nonlinearity:

    X_{t+1} = A X_t W + U_{t+1} B,    Y = MLP(X_{k+1})

Because the recurrence is linear, its state has the closed form
``X_{k+1} = sum_i A^i U_{k+1-i} B W^i``, the Jacobian between nodes is exactly
``(A^D)_ij (W^T)^D``, and diagonalising ``A`` and ``W`` turns ``k`` sequential sparse products
into one elementwise geometric sum (:mod:`mpssm.fastscan`).

Modules:

* :mod:`mpssm.graphcore`: graphs, the GSO, BFS oracles and synthetic datasets.
* :mod:`mpssm.linalg`: eigendecompositions, spectral norms and matrix powers.
* :mod:`mpssm.models`: the sequential block, the GCN baselines and the deep stacked model.
* :mod:`mpssm.fastscan`: the diagonalised evaluation of a block.
* :mod:`mpssm.sensitivity`: exact and finite-difference Jacobians and the sensitivity bounds.
* :mod:`mpssm.train`: reverse-mode gradients, Adam and the training loop.
* :mod:`mpssm.verify` and :mod:`mpssm.bench`: the property suite and the runtime comparison.
* :mod:`mpssm.cli`: the ``mpssm`` command.

## Determinism

Every random draw goes through an explicit ``numpy.random.Generator``. Sub-tasks (records,
trials, repetitions) derive their own seeds with :func:`mpssm.utils.derive_seed`, so results do
not depend on the order in which they are computed.
"""
