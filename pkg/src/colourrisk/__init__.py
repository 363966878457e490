"""Regional colour-classification risk models.

Pipeline: ingest daily regional indicator series and weekly colour labels,
aggregate to labelled weeks, search every indicator subset through a
PCA + cumulative-logit pipeline for the minimum-misclassification model per
region, then validate coefficient stability with delete-one-day-per-week
resampling.
"""

__version__ = "0.1.0"
