"""Finite-horizon LQR tracking control of a quadrotor with errors on SE_2(3)."""

__version__ = "0.1.0"
