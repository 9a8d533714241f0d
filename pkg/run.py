#!/usr/bin/env python3
"""Experiment entry point"""
from ldlab.cli import cli

if __name__ == '__main__':
    cli()
