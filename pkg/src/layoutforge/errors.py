"""Exception hierarchy shared by all layoutforge modules."""


class LayoutForgeError(Exception):
    """Base class for every error raised by this package."""


# -- layout DSL -------------------------------------------------------------

class ParseError(LayoutForgeError):
    pass


class MalformedLine(ParseError):
    def __init__(self, line_no: int, reason: str = ""):
        self.line_no = line_no
        self.reason = reason
        msg = f"malformed layout line {line_no}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class EmptyLayout(ParseError):
    def __init__(self, msg: str = "layout has no objects"):
        super().__init__(msg)


class LengthMismatch(ParseError):
    def __init__(self, n_layout: int, n_prompts: int):
        self.n_layout = n_layout
        self.n_prompts = n_prompts
        super().__init__(f"{n_layout} layout lines but {n_prompts} object prompts")


class MissingField(ParseError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing field {name!r}")


class AnswerUnparseable(ParseError):
    def __init__(self, cause: Exception):
        self.cause = cause
        super().__init__(f"answer organization does not parse: {cause}")


# -- reward ------------------------------------------------------------------

class SchemaError(LayoutForgeError):
    pass


class ZeroExpectedTotal(LayoutForgeError):
    def __init__(self):
        super().__init__("expected object counts sum to zero")


class SingleSample(LayoutForgeError):
    def __init__(self):
        super().__init__("entropy weighting needs at least two samples; use uniform weights explicitly")


class WeightSumError(LayoutForgeError):
    pass


# -- metrics -----------------------------------------------------------------

class EmptyScene(LayoutForgeError):
    def __init__(self):
        super().__init__("scene has no objects")


# -- llm gateway -------------------------------------------------------------

class UnboundPlaceholder(LayoutForgeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"template placeholder {{{name}}} is unbound")


class CassetteMiss(LayoutForgeError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"no cassette entry for request {digest}")


class CorruptCassette(LayoutForgeError):
    def __init__(self, offset: int, reason: str = ""):
        self.offset = offset
        super().__init__(f"corrupt cassette at byte offset {offset}" + (f": {reason}" if reason else ""))


class TransportError(LayoutForgeError):
    pass


class RateLimited(TransportError):
    pass


class NoStructureFound(LayoutForgeError):
    pass


class UnbalancedStructure(LayoutForgeError):
    pass


# -- pipeline ----------------------------------------------------------------

class GenerationRejected(LayoutForgeError):
    def __init__(self, attempts: int, last_error: Exception | None = None):
        self.attempts = attempts
        self.last_error = last_error
        super().__init__(f"generator output unusable after {attempts} attempts: {last_error}")


class FootprintMutated(LayoutForgeError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"lifting changed the footprint of object {index}")


class AssetCountMismatch(LayoutForgeError):
    def __init__(self, n_objects: int, n_assets: int):
        super().__init__(f"{n_objects} objects but {n_assets} assets")


class NonpositiveExtent(LayoutForgeError):
    pass


class AlignmentAborted(LayoutForgeError):
    """Raised when an update step fails; carries the best scene reached so far."""

    def __init__(self, cause: Exception, best_scene, history):
        self.cause = cause
        self.best_scene = best_scene
        self.history = history
        super().__init__(f"alignment aborted: {cause}")


# -- datagen -----------------------------------------------------------------

class QuotaViolation(LayoutForgeError):
    def __init__(self, scene_type: str, detail: str = ""):
        self.scene_type = scene_type
        super().__init__(f"granularity quota violated for {scene_type!r}" + (f": {detail}" if detail else ""))


class RoomBoundViolation(LayoutForgeError):
    pass


class AnswerMismatch(LayoutForgeError):
    pass


# -- render ------------------------------------------------------------------

class CanvasTooLarge(LayoutForgeError):
    pass
