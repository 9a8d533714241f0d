"""Shared numerics: sparse operators, linear solvers, layer-parallel helpers and I/O"""
import logging

logging.getLogger(__name__).addHandler(logging.NullHandler())
