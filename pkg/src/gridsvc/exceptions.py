"""Exception hierarchy shared across the package."""


class GridSVCError(Exception):
    """Base class for all package errors."""


class NetworkError(GridSVCError):
    """Invalid network data (non-conforming blocks, asymmetry, singular blocks)."""


class SingularBlockError(NetworkError):
    def __init__(self, block: str, detail: str = ""):
        self.block = block
        msg = f"block {block} is singular"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class UnknownBusError(GridSVCError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class PilotPlacementError(GridSVCError):
    """Pilot rows give a rank-deficient J_p J_p^T."""


class CodecError(GridSVCError):
    pass


class FrameError(GridSVCError):
    """Base class for wire-frame decoding failures."""


class BadMagicError(FrameError):
    pass


class ChecksumError(FrameError):
    pass


class LengthMismatchError(FrameError):
    pass


class WindowAlignmentError(GridSVCError):
    pass


class FixtureError(GridSVCError):
    """Malformed network or scenario fixture file."""
