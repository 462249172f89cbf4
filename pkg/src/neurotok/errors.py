"""Exception hierarchy shared by every neurotok module."""


class NeurotokError(Exception):
    """Base class; ``name`` is what the CLI prints on stderr."""

    @property
    def name(self) -> str:
        return type(self).__name__


# signal_io
class MalformedHeader(NeurotokError, ValueError):
    pass


class NonFinite(NeurotokError, ValueError):
    pass


class EmptyRecording(NeurotokError, ValueError):
    pass


class IoFailure(NeurotokError, OSError):
    pass


# preprocess
class InvalidBand(NeurotokError, ValueError):
    pass


class WindowTooLong(NeurotokError, ValueError):
    pass


class TooShort(NeurotokError, ValueError):
    pass


# patching / spectral / importance
class PatchTooLong(NeurotokError, ValueError):
    pass


class PatchTooShort(NeurotokError, ValueError):
    pass


class AsymmetricSpectrum(NeurotokError, ValueError):
    pass


class TooFewPatches(NeurotokError, ValueError):
    pass


# autodiff / nets / rvq
class ShapeMismatch(NeurotokError, ValueError):
    pass


class NonScalarOutput(NeurotokError, ValueError):
    pass


class NonFiniteInput(NeurotokError, ValueError):
    pass


class IndexOutOfRange(NeurotokError, IndexError):
    pass


# training
class NonFiniteLoss(NeurotokError, FloatingPointError):
    pass


class EmptyMask(NeurotokError, ValueError):
    pass


# metrics
class ConstantSignal(NeurotokError, ValueError):
    pass


# cli
class MalformedConfig(NeurotokError, ValueError):
    pass
