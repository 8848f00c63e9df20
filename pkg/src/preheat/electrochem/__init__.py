"""Electrochemical cell models: full DFN and the reduced single-particle variant."""

from preheat.electrochem.base import CellModel, ElectrochemState
from preheat.electrochem.dfn import DfnModel
from preheat.electrochem.spme import SpmeModel


def make_model(params, fidelity: str = "dfn", mesh=None) -> CellModel:
    """Build a cell model by fidelity name (``"dfn"`` or ``"reduced"``)."""
    if fidelity == "dfn":
        return DfnModel(params, mesh)
    if fidelity == "reduced":
        return SpmeModel(params, mesh)
    from preheat.errors import ConfigurationError

    raise ConfigurationError(f"unknown fidelity {fidelity!r}; expected 'dfn' or 'reduced'")


__all__ = ["CellModel", "ElectrochemState", "DfnModel", "SpmeModel", "make_model"]
