"""Toy-scale training harness for frequency-poisoned datasets."""
