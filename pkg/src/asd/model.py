"""Full model: extractor, latent factors, probes, and checkpoint IO.

The decomposed path runs extract -> assign -> embed -> predict and also
returns the assignment matrix for visualization. The pooled baseline
(``use_asd`` off) replicates the global average-pooled feature to every
head and has no factors, matching a plain global-pool classifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asdt import read_container, write_container
from .classifier import init_classifier, predict
from .decomposition import decompose, flatten_feature, init_latent_factors
from .errors import FormatError, ShapeError
from .extractor import ExtractorConfig, ExtractorParams, extract, init_extractor
from .synthetic import GeneratorConfig
from .tensor import Tensor, add, mean_rows


@dataclass
class ModelConfig:
    num_attributes: int = 6
    image_size: int = 32
    in_channels: int = 1
    stage_channels: list[int] = field(default_factory=lambda: [8, 32])
    kernel_size: int = 3
    pool_factor: int = 2
    use_asd: bool = True
    use_noise_factor: bool = True
    use_mean_feature: bool = True

    @property
    def channels(self) -> int:
        return self.stage_channels[-1]

    @property
    def num_heads(self) -> int:
        if self.use_asd and not self.use_noise_factor:
            return self.num_attributes
        return self.num_attributes + 1

    def extractor_config(self) -> ExtractorConfig:
        return ExtractorConfig(
            in_channels=self.in_channels,
            stage_channels=list(self.stage_channels),
            kernel_size=self.kernel_size,
            pool_factor=self.pool_factor,
        )

    def feature_hw(self) -> tuple[int, int]:
        p = self.pool_factor ** len(self.stage_channels)
        return self.image_size // p, self.image_size // p


@dataclass
class Model:
    config: ModelConfig
    extractor: ExtractorParams
    factors: Tensor | None  # None for the pooled baseline
    w: Tensor
    b: Tensor

    def parameters(self) -> list[Tensor]:
        params = self.extractor.tensors() + [self.w, self.b]
        if self.factors is not None:
            params.append(self.factors)
        return params

    def decayed_parameters(self) -> list[Tensor]:
        """Conv kernels and probe weights; never factors or biases."""
        return self.extractor.kernels + [self.w]

    def forward(self, image: Tensor) -> tuple[Tensor, Tensor | None]:
        """Probabilities per head plus the assignment matrix (None for baseline)."""
        fmap = extract(image, self.extractor, self.config.extractor_config())
        f_flat = flatten_feature(fmap)
        if self.config.use_asd:
            embeddings, assignment = decompose(
                fmap, self.factors, include_mean=self.config.use_mean_feature
            )
            return predict(embeddings, self.w, self.b), assignment
        pooled = mean_rows(f_flat)
        replicated = add(Tensor(np.zeros((self.config.num_heads, self.config.channels))), pooled)
        return predict(replicated, self.w, self.b), None


def init_model(config: ModelConfig, seed: int) -> Model:
    extractor = init_extractor(config.extractor_config(), seed)
    factors = None
    if config.use_asd:
        factors = init_latent_factors(
            config.num_attributes, config.channels, seed,
            include_noise=config.use_noise_factor,
        )
    w, b = init_classifier(config.num_heads, config.channels, seed)
    return Model(config=config, extractor=extractor, factors=factors, w=w, b=b)


def _encode_model_meta(config: ModelConfig) -> np.ndarray:
    return np.array([
        config.num_attributes, config.image_size, config.in_channels,
        config.kernel_size, config.pool_factor,
        float(config.use_asd), float(config.use_noise_factor), float(config.use_mean_feature),
    ], dtype=np.float64)


def _decode_model_meta(meta: np.ndarray, stages: np.ndarray) -> ModelConfig:
    v = [float(x) for x in meta]
    return ModelConfig(
        num_attributes=int(v[0]), image_size=int(v[1]), in_channels=int(v[2]),
        stage_channels=[int(s) for s in stages],
        kernel_size=int(v[3]), pool_factor=int(v[4]),
        use_asd=bool(v[5]), use_noise_factor=bool(v[6]), use_mean_feature=bool(v[7]),
    )


def _encode_generator(gen: GeneratorConfig) -> np.ndarray:
    return np.array([
        gen.image_size, gen.num_attributes, gen.channels,
        gen.glyph_radius, gen.jitter, gen.presence_prob, gen.noise_std,
    ], dtype=np.float64)


def _decode_generator(meta: np.ndarray) -> GeneratorConfig:
    v = [float(x) for x in meta]
    return GeneratorConfig(
        image_size=int(v[0]), num_attributes=int(v[1]), channels=int(v[2]),
        glyph_radius=v[3], jitter=v[4], presence_prob=v[5], noise_std=v[6],
    )


def save_checkpoint(model: Model, path, generator: GeneratorConfig | None = None) -> None:
    """All named tensors plus metadata in one container; round-trips bitwise."""
    entries: dict[str, np.ndarray] = {
        "meta.model": _encode_model_meta(model.config),
        "meta.stages": np.array(model.config.stage_channels, dtype=np.float64),
    }
    if generator is not None:
        entries["meta.generator"] = _encode_generator(generator)
    for name, tensor in model.extractor.named():
        entries[name] = tensor.data
    if model.factors is not None:
        entries["aem.z"] = model.factors.data
    entries["cls.w"] = model.w.data
    entries["cls.b"] = model.b.data
    write_container(entries, path)


def load_checkpoint(path, expect_attributes: int | None = None
                    ) -> tuple[Model, GeneratorConfig | None]:
    entries = read_container(path)
    for key in ("meta.model", "meta.stages", "cls.w", "cls.b"):
        if key not in entries:
            raise FormatError(f"checkpoint is missing the {key!r} entry")
    config = _decode_model_meta(entries["meta.model"], entries["meta.stages"])
    if expect_attributes is not None and config.num_attributes != expect_attributes:
        raise ShapeError(
            f"checkpoint has {config.num_attributes} attributes, expected {expect_attributes}"
        )
    kernels, biases = [], []
    for i in range(len(config.stage_channels)):
        for part, store in (("kernel", kernels), ("bias", biases)):
            name = f"stage{i}.{part}"
            if name not in entries:
                raise FormatError(f"checkpoint is missing the {name!r} entry")
            store.append(Tensor(entries[name], requires_grad=True))
    factors = None
    if config.use_asd:
        if "aem.z" not in entries:
            raise FormatError("checkpoint is missing the 'aem.z' entry")
        factors = Tensor(entries["aem.z"], requires_grad=True)
        if factors.shape != (config.num_heads, config.channels):
            raise ShapeError(
                f"factor matrix is {factors.shape}, expected {(config.num_heads, config.channels)}"
            )
    w = Tensor(entries["cls.w"], requires_grad=True)
    b = Tensor(entries["cls.b"], requires_grad=True)
    if w.shape != (config.num_heads, config.channels):
        raise ShapeError(f"probe weights are {w.shape}, expected {(config.num_heads, config.channels)}")
    generator = None
    if "meta.generator" in entries:
        generator = _decode_generator(entries["meta.generator"])
    model = Model(
        config=config,
        extractor=ExtractorParams(kernels, biases),
        factors=factors,
        w=w,
        b=b,
    )
    return model, generator
