"""Market-graph momentum spillover modeling toolkit.

A library plus CLI that turns price/news panels and a bi-typed
company/executive relation graph into stock movement predictions, with a
built-in synthetic data generator, gradient-checked training, evaluation
metrics, and a top-k buy-and-hold backtest that renders figures next to
its delimited report files.
"""

__version__ = "0.1.0"
