"""Causal effect restoration with proxy variables."""
