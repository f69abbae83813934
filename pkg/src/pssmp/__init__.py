"""Optimal prediction of the time of the extremum of a positive self-similar
Markov process through its Lamperti representation.

Modules
-------
levy_model
    Spectrally negative Lévy families, Laplace exponents and class gates.
scale_functions
    Closed-form and numerically inverted scale functions.
threshold_solver
    Optimal log-threshold ``k*`` and the ratio thresholds ``K*``.
value_functions
    One- and two-dimensional value functions.
lamperti_sim
    Monte Carlo engine over the Lamperti time change.
cli_harness
    Command-line front end (``python -m pssmp``).
"""

__version__ = "0.1.0"
