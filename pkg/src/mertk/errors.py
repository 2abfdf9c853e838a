"""Exception hierarchy shared by every mertk module."""


class MertkError(Exception):
    """Base class; the CLI maps these to exit code 1."""


# audio / dsp
class UnsupportedFormat(MertkError):
    pass


class CorruptContainer(MertkError):
    pass


class EmptyAudio(MertkError):
    pass


class ClipTooShort(MertkError):
    pass


class ClipShorterThanWindow(ClipTooShort):
    pass


class DegenerateBank(MertkError):
    pass


class TooFewFrames(MertkError):
    pass


# tensors / networks / containers
class ShapeMismatch(MertkError, ValueError):
    pass


class MissingTensor(MertkError, KeyError):
    pass


class BadMagic(CorruptContainer):
    pass


class BadCrc(CorruptContainer):
    pass


class TruncatedFile(CorruptContainer):
    pass


class EmptySequence(MertkError):
    pass


# training / classifiers
class EmptyDataset(MertkError):
    pass


class NonFiniteLoss(MertkError, FloatingPointError):
    pass


class SingleClass(MertkError):
    pass


class DimensionMismatch(MertkError, ValueError):
    pass


# evaluation
class TooSmall(MertkError):
    pass


class UnknownLabel(MertkError, KeyError):
    pass


class ZeroVariance(MertkError):
    pass


# datasets
class OutOfScale(MertkError, ValueError):
    pass


class BadScale(MertkError, ValueError):
    pass


class BadLabel(MertkError, ValueError):
    pass


class MissingAudio(MertkError):
    def __init__(self, clip_ids):
        self.clip_ids = list(clip_ids)
        super().__init__(f"missing audio for {len(self.clip_ids)} clip(s): {', '.join(self.clip_ids[:10])}")


class MalformedFilename(MertkError, ValueError):
    pass


# t-SNE
class CalibrationFailure(MertkError):
    pass


# cli
class MissingFeatures(MertkError):
    pass
