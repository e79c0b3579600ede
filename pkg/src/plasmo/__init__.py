"""Photo-acoustic imaging with plasmonic nano-particles: forward simulation and inversion."""

from .dispersion import HostPermittivity, LorentzMedium, resonance
from .emfield import IncidentWave, Scenario
from .geometry import Ball, BallDomain, Ellipsoid, Particle, Shape

__version__ = "0.1.0"
