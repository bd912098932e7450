"""Ball in a double hoop: hybrid model, trajectory optimisation, TV-LQR and delayed EKF."""

__version__ = "0.1.0"
