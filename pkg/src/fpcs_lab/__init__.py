"""Exact simulation and input-sensitivity analysis of FPCS hybrid systems."""
