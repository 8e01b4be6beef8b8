"""End-to-end orchestration: stage wiring, ablation variants, stage dumps.

A PipelineSession caches the per-image artifacts (grid segmentations,
superpixels, features) so ablation variants can be evaluated against the
same inputs without re-prompting the provider.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from .backend import SegmenterProvider
from .config import PipelineConfig
from .emr import run_emr
from .masks import EntityMap, ScoredMask, nms
from .mmg import MMGOutput, run_mmg
from .usr import run_usr


@dataclass(frozen=True)
class Variant:
    """Which modules are active; all False is the naive pooled-NMS baseline."""
    mmg: bool = True
    emr: bool = True
    usr: bool = True

    def label(self) -> str:
        if not (self.mmg or self.emr or self.usr):
            return "baseline"
        on = [name for name, flag in
              (("mmg", self.mmg), ("emr", self.emr), ("usr", self.usr)) if flag]
        return "+".join(on)


FULL = Variant(True, True, True)
BASELINE = Variant(False, False, False)
ABLATIONS = (BASELINE, Variant(False, True, True), Variant(True, False, True),
             Variant(True, True, False), FULL)


@dataclass
class StageOutputs:
    stage1: list[ScoredMask]
    after_emr: EntityMap
    final: EntityMap


class PipelineSession:
    def __init__(self, provider: SegmenterProvider, config: PipelineConfig):
        self.provider = provider
        self.config = config
        self.height = provider.height
        self.width = provider.width

    @cached_property
    def image(self):
        return self.provider.image()

    @cached_property
    def mmg_out(self) -> MMGOutput:
        return run_mmg(self.provider, self.image, self.config)

    @cached_property
    def features(self):
        return self.provider.embed()

    @cached_property
    def pooled_baseline(self) -> list[ScoredMask]:
        """All coarse-grid levels pooled through naive NMS at theta_o: the
        automatic-mask-generation emulation every variant without the first
        stage starts from."""
        levels = self.mmg_out.levels32
        pooled = levels.object + levels.part + levels.subpart
        pooled = [m for m in pooled if not m.mask.is_empty()]
        return nms(pooled, self.config.theta_o)

    def run(self, variant: Variant = FULL) -> StageOutputs:
        cfg = self.config
        stage1 = (self.mmg_out.object_refined if variant.mmg
                  else self.pooled_baseline)
        if variant.emr:
            after_emr = run_emr(stage1, self.mmg_out, self.features, cfg,
                                self.height, self.width)
        else:
            after_emr = EntityMap.build(stage1, self.height, self.width,
                                        require_disjoint=False)
        if variant.usr:
            final = run_usr(self.provider, self._usr_context(variant), after_emr, cfg)
        else:
            final = after_emr
        return StageOutputs(stage1=stage1, after_emr=after_emr, final=final)

    def _usr_context(self, variant: Variant) -> MMGOutput:
        """USR sees thinned part maps only when the first stage is active."""
        out = self.mmg_out
        if variant.mmg:
            return out
        return MMGOutput(
            object_refined=out.object_refined,
            part_thinned=[m for m in out.levels32.part if not m.mask.is_empty()],
            subpart_thinned=[m for m in out.levels32.subpart if not m.mask.is_empty()],
            object64=out.object64,
            best64=out.best64,
            superpixels=out.superpixels,
            density=out.density,
            levels32=out.levels32,
            levels64=out.levels64,
        )


def run_pipeline(provider: SegmenterProvider, config: PipelineConfig,
                 variant: Variant = FULL) -> EntityMap:
    return PipelineSession(provider, config).run(variant).final
