#!/usr/bin/env python3
"""Rederive the mean of 1/r over the unit cube seen from its center.

By symmetry the integral of 1/r over [-1/2, 1/2]^3 is 48 times the integral
over the wedge 0 <= z <= y <= x <= 1/2, which is integrated adaptively here.
"""
import math
import sys

import click
from scipy import integrate

sys.path.insert(0, '.')
from ldlab.recovery import CUBE_MEAN_INV_R  # noqa: E402


def mean_inverse_distance(tol: float) -> float:
    value, err = integrate.tplquad(
        lambda z, y, x: 1.0 / math.sqrt(x * x + y * y + z * z) if x > 0 else 0.0,
        0.0, 0.5,
        lambda x: 0.0, lambda x: x,
        lambda x, y: 0.0, lambda x, y: y,
        epsabs=tol, epsrel=tol,
    )
    return 48.0 * value


@click.command()
@click.option('--tol', default=1e-11, show_default=True, help="Quadrature tolerance")
def main(tol):
    numeric = mean_inverse_distance(tol)
    closed = 3.0 * math.log(2.0 + math.sqrt(3.0)) - math.pi / 2.0
    click.echo(f"adaptive quadrature : {numeric:.15f}")
    click.echo(f"closed form         : {closed:.15f}")
    click.echo(f"stored constant     : {CUBE_MEAN_INV_R:.15f}")
    click.echo(f"difference          : {abs(numeric - CUBE_MEAN_INV_R):.3e}")


if __name__ == '__main__':
    main()
