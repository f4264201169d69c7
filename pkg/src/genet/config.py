"""Run configuration; defaults are the published pre-training/fine-tuning settings."""

from __future__ import annotations

from dataclasses import dataclass

from .evaluation import EvalMode
from .finetune import FinetuneConfig
from .pretrain import LossForm, PretrainConfig


@dataclass
class RunConfig:
    # dataset files
    social: str | None = None
    poi: str | None = None
    reviews: str | None = None
    item_meta: str | None = None
    interactions: str | None = None
    # construction recipes
    k_regions: int | None = None
    rating_threshold: float = 4.0
    min_reviews: int = 2
    # pre-training
    embedding_dim: int = 64
    batch_size: int = 4096
    lr: float = 0.0005
    epochs: int = 500
    lam: float = 0.1
    beta1: float = 0.005
    beta2: float = 0.01
    tau: float = 0.2
    k_intra: int = 8
    loss_form: str = LossForm.LOG_SIGMOID.value
    np_enabled: bool = True
    imp_enabled: bool = True
    hscl_enabled: bool = True
    # fine-tuning
    ft_epochs: int = 10
    ft_lr: float = 0.0005
    warm_epochs: int = 3
    warm_factor: float = 10.0
    layers: int = 2
    seq_len: int = 20
    ft_batch_size: int = 4096
    init: str = "pretrained"
    # evaluation
    task: str = "topn"
    mode: str = "full"
    cold_start: str | None = None
    ks: str = "10,20"
    # run
    out: str = "genet_out"
    seed: int = 0

    def pretrain_config(self) -> PretrainConfig:
        return PretrainConfig(
            d=self.embedding_dim,
            batch_size=self.batch_size,
            learning_rate=self.lr,
            epochs=self.epochs,
            lam=self.lam,
            beta1_intra=self.beta1,
            beta2_inter=self.beta2,
            tau=self.tau,
            k_intra=self.k_intra,
            loss_form=LossForm(self.loss_form),
            np_enabled=self.np_enabled,
            imp_enabled=self.imp_enabled,
            hscl_enabled=self.hscl_enabled,
            seed=self.seed,
        )

    def finetune_config(self) -> FinetuneConfig:
        return FinetuneConfig(
            epochs=self.ft_epochs,
            learning_rate=self.ft_lr,
            warm_epochs=self.warm_epochs,
            warm_factor=self.warm_factor,
            layers=self.layers,
            seq_len=self.seq_len,
            batch_size=self.ft_batch_size,
            loss_form=LossForm(self.loss_form),
            seed=self.seed,
        )

    def eval_mode(self) -> EvalMode:
        return EvalMode.parse(self.mode)

    def k_values(self) -> tuple[int, ...]:
        return tuple(int(k) for k in self.ks.split(",") if k.strip())
