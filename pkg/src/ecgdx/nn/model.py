"""Channel-attention residual network over 1-D multi-lead signals.

Architecture (desk scale, fully parameterized): a strided stem
convolution, then stages of pre-activation residual blocks, each ending
in a squeeze/excitation gate; entry to every stage downsamples by 2.  A
global average pool absorbs the time axis, so the parameter count does
not depend on the input length, and a single dense head emits one logit
per class.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from ..errors import ConfigError, RecordValidationError


@dataclass(frozen=True)
class SeResNetConfig:
    input_leads: int = 8
    input_length: int = 15000
    stem_channels: int = 32
    blocks_per_stage: tuple[int, ...] = (2, 2, 2, 2)
    channels_per_stage: tuple[int, ...] = (32, 64, 128, 256)
    se_reduction: int = 4
    n_classes: int = 27
    seed: int = 0
    stem_kernel: int = 15
    block_kernel: int = 7

    def __post_init__(self):
        object.__setattr__(self, "blocks_per_stage", tuple(self.blocks_per_stage))
        object.__setattr__(self, "channels_per_stage", tuple(self.channels_per_stage))
        if len(self.blocks_per_stage) != len(self.channels_per_stage):
            raise ConfigError("blocks_per_stage and channels_per_stage lengths differ")
        if not self.blocks_per_stage:
            raise ConfigError("need at least one stage")
        for c in self.channels_per_stage:
            if c % self.se_reduction != 0:
                raise ConfigError(
                    f"se_reduction {self.se_reduction} does not divide channels {c}")
        if min(self.input_leads, self.input_length, self.stem_channels,
               self.n_classes) <= 0:
            raise ConfigError("all dimensions must be positive")

    @classmethod
    def small(cls, **overrides) -> "SeResNetConfig":
        """A laptop-friendly preset used by the fast training tests."""
        base = dict(input_leads=8, input_length=512, stem_channels=16,
                    blocks_per_stage=(1, 1), channels_per_stage=(16, 32),
                    se_reduction=4, n_classes=27, seed=0,
                    stem_kernel=7, block_kernel=7)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blocks_per_stage"] = list(self.blocks_per_stage)
        d["channels_per_stage"] = list(self.channels_per_stage)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SeResNetConfig":
        d = dict(d)
        d["blocks_per_stage"] = tuple(d["blocks_per_stage"])
        d["channels_per_stage"] = tuple(d["channels_per_stage"])
        return cls(**d)


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class SeResNet:
    """Holds parameters/buffers and builds the forward graph.

    ``params`` maps name -> float64 ndarray (trainable); ``buffers`` maps
    name -> ndarray (batch-norm running statistics; saved, not trained).
    """

    def __init__(self, config: SeResNetConfig, params: dict | None = None,
                 buffers: dict | None = None):
        self.config = config
        if params is not None and buffers is not None:
            self.params = params
            self.buffers = buffers
            return
        self.params = {}
        self.buffers = {}
        rng = np.random.default_rng(np.random.PCG64(config.seed))
        c = config.stem_channels
        self._make_conv(rng, "stem.conv", config.input_leads, c, config.stem_kernel)
        self._make_bn("stem.bn", c)
        in_c = c
        for s, (n_blocks, out_c) in enumerate(zip(config.blocks_per_stage,
                                                  config.channels_per_stage)):
            for b in range(n_blocks):
                prefix = f"stage{s}.block{b}"
                self._make_block(rng, prefix, in_c, out_c,
                                 stride=2 if b == 0 else 1)
                in_c = out_c
        self._make_bn("head.bn", in_c)
        self._make_dense(rng, "head.fc", in_c, config.n_classes)

    # -- parameter construction -------------------------------------------

    def _make_conv(self, rng, name, c_in, c_out, k):
        self.params[name + ".w"] = _kaiming_uniform(rng, (c_out, c_in, k), c_in * k)
        self.params[name + ".b"] = np.zeros(c_out)

    def _make_dense(self, rng, name, f_in, f_out):
        self.params[name + ".w"] = _kaiming_uniform(rng, (f_in, f_out), f_in)
        self.params[name + ".b"] = np.zeros(f_out)

    def _make_bn(self, name, c):
        self.params[name + ".gamma"] = np.ones(c)
        self.params[name + ".beta"] = np.zeros(c)
        self.buffers[name + ".running_mean"] = np.zeros(c)
        self.buffers[name + ".running_var"] = np.ones(c)

    def _make_block(self, rng, prefix, in_c, out_c, stride):
        k = self.config.block_kernel
        self._make_bn(prefix + ".bn1", in_c)
        self._make_conv(rng, prefix + ".conv1", in_c, out_c, k)
        self._make_bn(prefix + ".bn2", out_c)
        self._make_conv(rng, prefix + ".conv2", out_c, out_c, k)
        r = self.config.se_reduction
        self._make_dense(rng, prefix + ".se.fc1", out_c, out_c // r)
        self._make_dense(rng, prefix + ".se.fc2", out_c // r, out_c)
        if stride != 1 or in_c != out_c:
            self._make_conv(rng, prefix + ".short", in_c, out_c, 1)

    def parameter_count(self) -> int:
        return sum(v.size for v in self.params.values())

    # -- forward ------------------------------------------------------------

    def _bn(self, x, name, pvars, training):
        return ad.batchnorm(x, pvars[name + ".gamma"], pvars[name + ".beta"],
                            self.buffers[name + ".running_mean"],
                            self.buffers[name + ".running_var"], training)

    def _block(self, x, prefix, pvars, training, stride, in_c, out_c):
        k = self.config.block_kernel
        pre = ad.relu(self._bn(x, prefix + ".bn1", pvars, training))
        if stride != 1 or in_c != out_c:
            short = ad.conv1d(pre, pvars[prefix + ".short.w"],
                              pvars[prefix + ".short.b"], stride=stride, padding=0)
        else:
            short = x
        h = ad.conv1d(pre, pvars[prefix + ".conv1.w"], pvars[prefix + ".conv1.b"],
                      stride=stride, padding=k // 2)
        h = ad.relu(self._bn(h, prefix + ".bn2", pvars, training))
        h = ad.conv1d(h, pvars[prefix + ".conv2.w"], pvars[prefix + ".conv2.b"],
                      stride=1, padding=k // 2)
        se_params = {"fc1_w": pvars[prefix + ".se.fc1.w"],
                     "fc1_b": pvars[prefix + ".se.fc1.b"],
                     "fc2_w": pvars[prefix + ".se.fc2.w"],
                     "fc2_b": pvars[prefix + ".se.fc2.b"]}
        h = ad.se_block(h, se_params, self.config.se_reduction)
        return ad.add(h, short)

    def forward(self, x, training: bool = False) -> tuple[ad.Var, dict]:
        """Build the graph for a batch x [B, leads, T].

        Returns the logits Var [B, n_classes] and the dict of parameter
        Vars whose ``.grad`` fields are populated by ``backward``.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] != self.config.input_leads:
            raise RecordValidationError(
                f"expected input [B, {self.config.input_leads}, T], got {x.shape}")
        pvars = {name: ad.Var(value) for name, value in self.params.items()}
        h = ad.conv1d(ad.Var(x), pvars["stem.conv.w"], pvars["stem.conv.b"],
                      stride=2, padding=self.config.stem_kernel // 2)
        h = ad.relu(self._bn(h, "stem.bn", pvars, training))
        in_c = self.config.stem_channels
        for s, (n_blocks, out_c) in enumerate(zip(self.config.blocks_per_stage,
                                                  self.config.channels_per_stage)):
            for b in range(n_blocks):
                h = self._block(h, f"stage{s}.block{b}", pvars, training,
                                stride=2 if b == 0 else 1, in_c=in_c, out_c=out_c)
                in_c = out_c
        h = ad.relu(self._bn(h, "head.bn", pvars, training))
        pooled = ad.mean_last(h)
        logits = ad.dense(pooled, pvars["head.fc.w"], pvars["head.fc.b"])
        return logits, pvars

    def predict_logits(self, x) -> np.ndarray:
        logits, _ = self.forward(x, training=False)
        return logits.value

    def predict_probs(self, x) -> np.ndarray:
        """Sigmoid class probabilities in eval mode."""
        return 1.0 / (1.0 + np.exp(-self.predict_logits(x)))
