from dataclasses import dataclass, field

from mpssm.exceptions import TapeError


@dataclass(eq=False)
class BlockRecord:
    kind: str
    norm_cache: tuple
    block_cache: tuple
    mask: object
    output_shape: tuple


@dataclass(eq=False)
class GradientTape:
    """
    Everything a deep forward pass needs to be differentiated or replayed: the inputs, each
    layer's cache (states, pre-activations, normalisation statistics) and the dropout masks.
    """

    gso: object = None
    features: object = None
    signature: tuple = None
    train_mode: bool = False
    encoder_cache: object = None
    blocks: list = field(default_factory=list)
    pooled: bool = False
    head_cache: object = None
    output: object = None

    def reset(self, gso, features, signature, train_mode):
        self.gso = gso
        self.features = features
        self.signature = signature
        self.train_mode = train_mode
        self.encoder_cache = None
        self.blocks = []
        self.pooled = False
        self.head_cache = None
        self.output = None

    @property
    def recorded(self):
        return self.output is not None

    @property
    def masks(self):
        return [record.mask for record in self.blocks]

    def check(self, signature):
        if not self.recorded:
            raise TapeError("tape is empty; run deep_forward with tape= first")
        if self.signature != signature:
            raise TapeError("tape was recorded from a model with different parameters")

    def replay(self, model):
        """Re-run the recorded forward pass with the recorded dropout masks."""
        from mpssm.models.deep import deep_forward, model_signature

        self.check(model_signature(model))
        return deep_forward(
            model, self.gso, self.features, train_mode=self.train_mode, masks=self.masks
        )
