"""Numerical toolkit for SN spaces and monotone multifunctions."""
