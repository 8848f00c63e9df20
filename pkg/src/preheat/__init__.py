"""Cold-start preheating of lithium-ion cells: DFN electrochemistry, PTC film
heating, pulse supervision and reinforcement-learning scheduling."""

__version__ = "0.1.0"
