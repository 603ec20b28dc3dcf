"""Numerical verification lab for capped Poisson functional moments.

Computes truncation-certified moments of X*sqrt(min(X,a)*min(X,b))*1(X >= t)
for X ~ Poisson(lambda), certifies variance-to-mean ratio bounds over
parameter grids, models conditionally (in)dependent discrete joints, and
evaluates the associated Poissonized weighted statistic and sample-complexity
expression.
"""

__version__ = "0.1.0"
