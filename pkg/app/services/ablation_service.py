"""
Ablation Service for running every variant across seeds.
변형(variant) x 시드 조합으로 학습을 실행하고 비교 요약을 만드는 서비스.
"""
import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.core.logging import get_logger
from app.core.result import Err, Ok, Result, SystemError
from app.infrastructure.artifact_store import METRICS_CSV, ArtifactStore
from app.repositories.metrics_repository import load_table, parse_number
from app.schemas.ablation import AblationSummary, VariantSummary
from app.schemas.metrics import DIVERGED
from app.schemas.run_config import RunConfig
from app.services.config_loader import resolve_cem_loss_weight
from app.services.run_executor import RunExecutor
from app.services.run_service import resume_from_latest_checkpoint, run_training

logger = get_logger(__name__)

BASELINE = "grac"
SUMMARY_CSV = "summary.csv"
# normalized 컬럼 이름에 계산식을 그대로 남깁니다
SUMMARY_HEADER = [
    "variant",
    "final_return_mean",
    "normalized=1+(R-R_grac)/|R_grac|",
    "q1_abs_max",
    "q_gap_abs_mean",
    "failed_seeds",
]
FINAL_EVALUATIONS = 10

# DDPG 계열 변형은 단일 critic 타깃, 내부 루프 1회
_DDPG = {"use_maxmin": False, "use_cem_loss": False, "use_double_q": False, "K": 1}

VARIANTS: Dict[str, Dict[str, object]] = {
    "grac": {},
    "grac_wo_critic_cem": {"use_maxmin": False},
    "grac_qloss_only": {"use_cem_loss": False},
    "grac_cemloss_only": {"use_q_loss": False},
    "ddpg_target": {**_DDPG, "use_target_network": True, "use_target_regularization": False},
    "no_target_no_reg": {**_DDPG, "use_target_network": False, "use_target_regularization": False},
    "no_target_with_reg": {**_DDPG, "use_target_network": False, "use_target_regularization": True},
}

# 선택 변형: max-min 대신 min-Q actor 목적
OPTIONAL_VARIANTS: Dict[str, Dict[str, object]] = {
    "grac_min_q_actor": {"use_maxmin": False, "use_min_q_actor": True},
}


def variant_config(base: RunConfig, variant: str, seed: int, root: Path) -> RunConfig:
    """base 설정에 변형 플래그와 시드, 출력 디렉토리를 덮어쓴 사본."""
    flags = {**VARIANTS, **OPTIONAL_VARIANTS}[variant]
    grac = base.grac.model_copy(update=dict(flags))
    cfg = base.model_copy(
        update={"grac": grac, "seed": seed, "output_dir": str(root / variant / f"seed_{seed}"), "resume_from": None}
    )
    return resolve_cem_loss_weight(cfg)


def _run_job(cfg: RunConfig, executor: Optional[RunExecutor] = None) -> Tuple[bool, str]:
    # 프로세스 간에는 (성공 여부, 메시지) 만 넘깁니다
    result = (executor or RunExecutor()).run(
        run_training, plan_retry=resume_from_latest_checkpoint, label=cfg.output_dir, cfg=cfg
    )
    match result:
        case Ok(summary):
            return True, summary.run_dir
        case Err():
            return False, result.error_message
    return False, "unknown result"


def normalized_return(value: float, baseline: float) -> Optional[float]:
    """
    baseline 대비 상대 성능 1 + (R - R_baseline) / |R_baseline|.

    baseline 이 양수면 R / R_baseline 과 같고, return 이 음수(비용)인 환경에서도 R 이 클수록 값이 커집니다.
    baseline 이 0 이면 정의하지 않습니다 (None).
    """
    if baseline == 0.0:
        return None
    return 1.0 + (value - baseline) / abs(baseline)


def summarize_run(metrics_path: Path) -> Dict[str, Optional[float]]:
    """
    metrics.csv 하나에서 (마지막 10회 평가 평균, |q1_mean| 최댓값, |q_gap_mean| 평균) 을 계산합니다.
    발산 행이 있으면 q1_abs_max 는 inf 입니다.
    """
    _, rows = load_table(metrics_path)
    returns = [v for v in (parse_number(r["eval_return_mean"]) for r in rows) if v is not None]
    q1 = [abs(v) for v in (parse_number(r["q1_mean"]) for r in rows) if v is not None]
    gaps = [abs(v) for v in (parse_number(r["q_gap_mean"]) for r in rows) if v is not None]
    diverged = any(r["eval_return_mean"] == DIVERGED for r in rows)
    return {
        "final_return": float(np.mean(returns[-FINAL_EVALUATIONS:])) if returns else None,
        "q1_abs_max": float("inf") if diverged else (max(q1) if q1 else None),
        "q_gap_abs_mean": float(np.mean(gaps)) if gaps else None,
    }


class AblationService:
    """
    ablation 실행 흐름을 총괄(오케스트레이션)하는 클래스.
    '어떤 변형을 어떤 시드로 돌릴 것인가'와 '결과를 어떻게 비교할 것인가'에 대한 책임을 가진다.
    """

    def __init__(self, executor: RunExecutor):
        self._executor = executor

    def run(
        self,
        base: RunConfig,
        seeds: List[int],
        workers: int = 1,
        include_min_q_variant: bool = False,
        variants: Optional[List[str]] = None,
    ) -> Result:
        """
        모든 (변형, 시드) 조합을 실행합니다. 한 실행이 실패해도 나머지는 계속됩니다.

        Args:
            base: 기준 설정 (output_dir 가 ablation 루트)
            seeds: 시드 목록
            workers: 1 보다 크면 프로세스 풀로 병렬 실행
            include_min_q_variant: min-Q actor 변형 포함 여부
            variants: 실행할 변형 이름 (기본값: 전부)

        Returns:
            Ok(AblationSummary) 또는 요약을 쓰지 못했을 때 Err
        """
        start_time = time.time()
        names = variants or list(VARIANTS) + (list(OPTIONAL_VARIANTS) if include_min_q_variant else [])
        unknown = [n for n in names if n not in VARIANTS and n not in OPTIONAL_VARIANTS]
        if unknown:
            raise ValueError(f"Unknown variants {unknown}; available: {sorted({**VARIANTS, **OPTIONAL_VARIANTS})}")

        root = Path(base.output_dir)
        jobs = [(name, seed, variant_config(base, name, seed, root)) for name in names for seed in seeds]
        total = len(jobs)
        logger.info("=" * 70)
        logger.info(f"Ablation: {len(names)} variants x {len(seeds)} seeds = {total} runs (workers={workers})")
        logger.info("=" * 70)

        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(_run_job, [cfg for _, _, cfg in jobs]))
        else:
            outcomes = []
            for i, (name, seed, cfg) in enumerate(jobs):
                logger.info(f"[{i + 1}/{total}] {name} seed {seed} -> {cfg.output_dir}")
                outcomes.append(_run_job(cfg, self._executor))

        failed_runs: List[str] = []
        per_variant: Dict[str, List[Dict[str, Optional[float]]]] = {name: [] for name in names}
        summaries = {name: VariantSummary(variant=name, seeds=list(seeds)) for name in names}
        for (name, seed, cfg), (ok, message) in zip(jobs, outcomes):
            run_id = f"{name}/seed_{seed}"
            if ok:
                logger.info(f"✓ {run_id} completed")
            else:
                failed_runs.append(run_id)
                summaries[name].failed_seeds.append(seed)
                logger.error(f"✗ {run_id} failed: {message}")
            metrics_path = Path(cfg.output_dir) / METRICS_CSV
            if metrics_path.exists():
                per_variant[name].append(summarize_run(metrics_path))

        for name in names:
            self._fill_variant(summaries[name], per_variant[name])
        baseline = summaries.get(BASELINE)
        baseline_return = baseline.final_return_mean if baseline else None
        for summary in summaries.values():
            if summary.final_return_mean is not None and baseline_return is not None:
                summary.normalized = normalized_return(summary.final_return_mean, baseline_return)

        elapsed = time.time() - start_time
        result = AblationSummary(
            total=total,
            success=total - len(failed_runs),
            failed=len(failed_runs),
            failed_runs=failed_runs,
            processing_time=f"{elapsed:.1f}s",
            variants=summaries,
        )
        logger.info(f"Ablation over {len(names)} variants took {elapsed:.1f}s")
        logger.info(f"{result.success}/{total} runs completed, {result.failed} failed")
        if failed_runs:
            logger.error(f"Failed runs: {failed_runs}")

        try:
            ArtifactStore(root).write_text(SUMMARY_CSV, format_summary_csv(result))
        except OSError as e:
            return Err(SystemError(error=e, context={"root": str(root)}))
        return Ok(result)

    @staticmethod
    def _fill_variant(summary: VariantSummary, runs: List[Dict[str, Optional[float]]]) -> None:
        returns = [r["final_return"] for r in runs if r["final_return"] is not None]
        q1 = [r["q1_abs_max"] for r in runs if r["q1_abs_max"] is not None]
        gaps = [r["q_gap_abs_mean"] for r in runs if r["q_gap_abs_mean"] is not None]
        summary.final_return_mean = float(np.mean(returns)) if returns else None
        summary.q1_abs_max = max(q1) if q1 else None
        summary.q_gap_abs_mean = float(np.mean(gaps)) if gaps else None


def format_summary_csv(summary: AblationSummary) -> str:
    def cell(value: Optional[float]) -> str:
        return "" if value is None else format(value, ".10g")

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for v in summary.variants.values():
        writer.writerow(
            [
                v.variant,
                cell(v.final_return_mean),
                cell(v.normalized),
                cell(v.q1_abs_max),
                cell(v.q_gap_abs_mean),
                " ".join(str(s) for s in v.failed_seeds),
            ]
        )
    return buffer.getvalue()
