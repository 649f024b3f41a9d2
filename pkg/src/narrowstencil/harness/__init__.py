"""Verification harness: convergence studies, lemma batteries, reference tables."""
