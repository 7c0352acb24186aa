"""Wind-adaptive quadrotor control with a meta-learned residual basis."""

__version__ = "0.1.0"
