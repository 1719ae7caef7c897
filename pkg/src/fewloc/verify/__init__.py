"""Brute-force oracles, finite-difference checks and the verification suites."""
