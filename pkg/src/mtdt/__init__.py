"""Desk-scale digital twin of a signalized intersection.

Scenario generation (mesoscopic queue simulation), a multi-task learned
surrogate model for exit/inflow waveforms, queue lengths and travel-time
histograms, plus evaluation reports, a CLI and an HTTP service.
"""

__version__ = "0.1.0"
