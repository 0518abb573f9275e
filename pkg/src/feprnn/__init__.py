"""Multiscale off-axis composite analysis with a physically recurrent surrogate.

Modules: kinematics (finite-strain tensor algebra), constitutive (fiber and
matrix models), micromodel (Voigt mixture and periodic RVE data generators),
pathgen (load paths and protocols), prnn (network, training, transfer),
singlescale and macrosolver (structural drivers), io, config and cli.
"""

__version__ = "0.1.0"
