"""UAV data harvesting in a grid city: simulator, DDQN agent, evaluation."""

__version__ = "0.1.0"
