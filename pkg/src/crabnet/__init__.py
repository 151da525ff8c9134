"""Coordinated beam management for mmWave vehicular networks.

Core pieces: the world model (:mod:`crabnet.scenario`), beam/channel/rate
math (:mod:`crabnet.phy`), candidate configurations
(:mod:`crabnet.configspace`), the interaction graph (:mod:`crabnet.graph`),
the belief-propagation coordinator (:mod:`crabnet.crab`), clustering/bandit
baselines (:mod:`crabnet.baselines`), the evaluation harness
(:mod:`crabnet.simulate`), and brute-force test oracles
(:mod:`crabnet.oracle`).
"""

__version__ = "0.1.0"
