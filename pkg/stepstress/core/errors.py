"""Exception types shared by the numerical modules."""

from __future__ import annotations

from typing import Any


class NumericalError(ArithmeticError):
    """A computation failed numerically (root finding, quadrature, conditioning, overflow)."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.diagnostics: dict[str, Any] = dict(diagnostics or {})

    def to_dict(self) -> dict[str, Any]:
        return {"error": "numeric", "message": str(self), "details": self.diagnostics}
