"""
Run Service for orchestrating a single training run.
학습 실행 한 번(설정 스냅샷, 학습 루프, 주기적 평가, 체크포인트)을 총괄하는 서비스.
"""
import time
from contextlib import ExitStack
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.exceptions import ConfigParseError, DivergenceError, GracError
from app.core.logging import get_logger, run_log
from app.core.result import (
    ConfigurationError,
    DivergenceFailure,
    Err,
    InvalidDataError,
    Ok,
    Result,
    SystemError,
)
from app.infrastructure.artifact_store import CONFIG_SNAPSHOT, ArtifactStore
from app.infrastructure.checkpoint_store import CheckpointFormatError, load_checkpoint, save_checkpoint
from app.infrastructure.envs import Environment, make_env
from app.repositories.metrics_repository import MetricsRepository
from app.schemas.metrics import DIVERGED, EvaluationSummary, MetricsRow, RunSummary, StepMetrics
from app.schemas.run_config import RunConfig
from app.services import networks as nets
from app.services.config_loader import dump_config, parse_config, resolve_cem_loss_weight
from app.services.grac_trainer import GracAgent, TrainingWorld, alpha_schedule, train_step
from app.services.run_executor import RunExecutor

logger = get_logger(__name__)

STEP_KEY = "meta/step"

StepCallback = Callable[[StepMetrics], None]


def evaluate(
    phi: nets.Params,
    env: Environment,
    episodes: int,
    seed: int,
    max_action: float,
) -> Tuple[float, float]:
    """
    결정적 정책 a = max_action * tanh(mu(s)) 로 episodes 개의 에피소드를 실행합니다.
    에피소드 i 는 seed + i 로 reset 됩니다.

    Returns:
        (평균 return, 모표준편차)
    """
    returns: List[float] = []
    for i in range(episodes):
        observation = env.reset(seed + i)
        total = 0.0
        while True:
            mean, _ = nets.actor_forward(observation, phi)
            outcome = env.step(nets.squashed_mean(mean, max_action))
            total += outcome.reward
            if outcome.done or outcome.truncated:
                break
            observation = outcome.observation
        returns.append(total)
    return float(np.mean(returns)), float(np.std(returns))


class _IntervalStats:
    """평가 구간 동안의 critic 진단값 누적기."""

    def __init__(self):
        self.reset()

    def reset(self) -> None:
        self.q1_sum = 0.0
        self.gap_sum = 0.0
        self.iters_sum = 0.0
        self.updates = 0
        self.alpha: Optional[float] = None

    def add(self, metrics: StepMetrics) -> None:
        if not metrics.updated:
            return
        self.q1_sum += metrics.y1_mean
        self.gap_sum += metrics.gap_mean
        self.iters_sum += metrics.critic_iters
        self.updates += 1
        self.alpha = metrics.alpha

    def row(self, step: int, eval_mean: Union[float, str], eval_std: float, fallback_alpha: float) -> MetricsRow:
        n = max(self.updates, 1)
        return MetricsRow(
            step=step,
            eval_return_mean=eval_mean,
            eval_return_std=eval_std,
            q1_mean=self.q1_sum / n,
            q_gap_mean=self.gap_sum / n,
            critic_iters=self.iters_sum / n,
            alpha=self.alpha if self.alpha is not None else fallback_alpha,
        )


def _restore_agent(cfg: RunConfig, spec) -> Tuple[GracAgent, int]:
    arrays = load_checkpoint(cfg.resume_from)
    agent = GracAgent.from_arrays(arrays)
    if agent.phi is None or agent.critics.theta1 is None:
        raise CheckpointFormatError(f"Checkpoint {cfg.resume_from} does not contain agent parameters")
    if agent.max_action != spec.max_action:
        raise CheckpointFormatError(
            f"Checkpoint was trained with max_action={agent.max_action}, env '{cfg.env}' uses {spec.max_action}"
        )
    start_step = int(arrays[STEP_KEY][0]) if STEP_KEY in arrays else 0
    return agent, start_step


def _save(store: ArtifactStore, agent: GracAgent, step: int, final: bool) -> Path:
    arrays = agent.to_arrays()
    arrays[STEP_KEY] = np.array([float(step)])
    return save_checkpoint(store.checkpoint_path(None if final else step), arrays)


def run_training(cfg: RunConfig, on_step: Optional[StepCallback] = None) -> Result:
    """
    학습 실행 한 번을 수행합니다.

    출력 디렉토리에 config.txt, metrics.csv, checkpoints/, train.log 를 남깁니다.
    eval_interval 스텝마다 평가 행을 하나씩 추가하며, 발산하면 'diverged' 행을 쓰고 중단합니다.

    Args:
        cfg: cem_loss_weight 가 결정된 RunConfig
        on_step: 매 스텝 StepMetrics 를 받는 콜백 (진단용)

    Returns:
        Ok(RunSummary) 또는 Err(DivergenceFailure / ConfigurationError / InvalidDataError / SystemError)
    """
    with ExitStack() as stack:
        try:
            stack.enter_context(run_log(cfg.output_dir))
        except PermissionError as e:
            return Err(InvalidDataError(error=e))
        except OSError as e:
            return Err(SystemError(error=e))
        return _train(cfg, on_step)


def _train(cfg: RunConfig, on_step: Optional[StepCallback]) -> Result:
    start_time = time.time()
    logger.info("=" * 70)
    logger.info(f"Training run: env={cfg.env}, seed={cfg.seed}, steps={cfg.total_steps}, out={cfg.output_dir}")
    logger.info("=" * 70)

    try:
        cfg = resolve_cem_loss_weight(cfg)
        cem_loss_weight = cfg.cem_loss_weight
        env = make_env(cfg.env)
        eval_env = make_env(cfg.env)
        store = ArtifactStore(cfg.output_dir)
        store.write_text(CONFIG_SNAPSHOT, dump_config(cfg))
    except (ValueError, GracError) as e:
        return Err(ConfigurationError(error=e, context={"env": cfg.env}))
    except PermissionError as e:
        return Err(InvalidDataError(error=e))
    except OSError as e:
        return Err(SystemError(error=e))

    init_seq, train_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    start_step = 0
    try:
        if cfg.resume_from:
            agent, start_step = _restore_agent(cfg, env.spec)
            logger.info(f"Resumed from {cfg.resume_from} at step {start_step}")
        else:
            agent = GracAgent.create(env.spec, cfg.grac, np.random.default_rng(init_seq))
    except (CheckpointFormatError, FileNotFoundError, KeyError) as e:
        return Err(InvalidDataError(error=e, context={"resume_from": cfg.resume_from}))

    # 재개 시 난수 상태는 (seed, step) 으로 새로 만듭니다
    rng = np.random.default_rng([cfg.seed, start_step]) if start_step else np.random.default_rng(train_seq)
    world = TrainingWorld.create(env, agent, cfg.grac, rng)
    repository = MetricsRepository(store.metrics_path)
    eval_seed = cfg.seed + settings.EVAL_SEED_OFFSET
    stats = _IntervalStats()
    eval_rows = 0
    last_eval: Optional[float] = None

    try:
        repository.initialize(append=bool(cfg.resume_from), resume_step=start_step if cfg.resume_from else None)
        for t in range(start_step, cfg.total_steps):
            step = t + 1
            try:
                metrics = train_step(world, cfg.grac, t, cfg.total_steps, cem_loss_weight)
            except DivergenceError as e:
                fallback = alpha_schedule(t, cfg.total_steps, cfg.grac.alpha_start, cfg.grac.alpha_end)
                repository.append(stats.row(step, DIVERGED, 0.0, fallback))
                logger.error(f"✗ Run diverged at step {step}: {e}")
                return Err(DivergenceFailure(error=e, context={"step": step, "run_dir": str(store.base_path)}))

            stats.add(metrics)
            if on_step is not None:
                on_step(metrics)

            if step % cfg.eval_interval == 0:
                mean, std = evaluate(agent.phi, eval_env, cfg.eval_episodes, eval_seed, agent.max_action)
                fallback = alpha_schedule(t, cfg.total_steps, cfg.grac.alpha_start, cfg.grac.alpha_end)
                row = stats.row(step, mean, std, fallback)
                repository.append(row)
                stats.reset()
                eval_rows += 1
                last_eval = mean
                logger.info(
                    f"step {step}/{cfg.total_steps}: eval {mean:.3f} ± {std:.3f}, "
                    f"q1 {row.q1_mean:.3f}, gap {row.q_gap_mean:.3e}, iters {row.critic_iters:.2f}"
                )

            if cfg.checkpoint_interval and step % cfg.checkpoint_interval == 0:
                _save(store, agent, step, final=False)

        _save(store, agent, max(cfg.total_steps, start_step), final=True)
    except PermissionError as e:
        return Err(InvalidDataError(error=e))
    except OSError as e:
        return Err(SystemError(error=e, context={"run_dir": str(store.base_path)}))

    elapsed = time.time() - start_time
    logger.info(f"✓ Run finished in {elapsed:.1f}s ({eval_rows} evaluations, {world.episodes_completed} episodes)")
    return Ok(
        RunSummary(
            run_dir=str(store.base_path),
            steps_completed=max(cfg.total_steps, start_step),
            eval_rows=eval_rows,
            final_eval_return_mean=last_eval,
            episodes_completed=world.episodes_completed,
        )
    )


def evaluate_run(
    run_dir: Union[str, Path],
    episodes: int,
    seed: Optional[int] = None,
    checkpoint: Optional[Union[str, Path]] = None,
) -> Result:
    """
    run 디렉토리의 config.txt 와 체크포인트로 정책을 평가합니다.

    Args:
        seed: 평가 시드 (기본값: 학습 seed + EVAL_SEED_OFFSET)
        checkpoint: 체크포인트 경로 (기본값: checkpoints/final.ckpt)
    """
    try:
        store = ArtifactStore(run_dir)
        cfg = parse_config(store.config_path)
        ckpt_path = Path(checkpoint) if checkpoint else store.checkpoint_path()
        agent = GracAgent.from_arrays(load_checkpoint(ckpt_path))
        env = make_env(cfg.env)
    except ConfigParseError as e:
        return Err(ConfigurationError(error=e))
    except (CheckpointFormatError, FileNotFoundError, KeyError) as e:
        return Err(InvalidDataError(error=e, context={"run_dir": str(run_dir)}))

    eval_seed = seed if seed is not None else cfg.seed + settings.EVAL_SEED_OFFSET
    mean, std = evaluate(agent.phi, env, episodes, eval_seed, agent.max_action)
    logger.info(f"Evaluation over {episodes} episodes: {mean:.3f} ± {std:.3f}")
    return Ok(EvaluationSummary(run_dir=str(run_dir), episodes=episodes, seed=eval_seed, return_mean=mean, return_std=std))


def resume_from_latest_checkpoint(failure: Err, kwargs: Dict[str, Any]) -> Dict[str, Any]:
    """
    run_training 재시도 인자를 마지막 주기 체크포인트에서 이어가도록 바꿉니다.

    체크포인트가 아직 없으면 인자를 그대로 두어 step 0 부터 다시 시작합니다.
    """
    cfg: RunConfig = kwargs["cfg"]
    latest = ArtifactStore(cfg.output_dir).latest_checkpoint()
    if latest is None:
        logger.warning(f"No checkpoint under {cfg.output_dir} yet; restarting from step 0 ({failure.error_message})")
        return kwargs
    logger.info(f"Resuming {cfg.output_dir} from {latest.name} after: {failure.error_message}")
    kwargs["cfg"] = cfg.model_copy(update={"resume_from": str(latest)})
    return kwargs


class RunService:
    """
    학습/평가 실행을 재시도 실행기에 위임하는 서비스.
    학습 재시도는 마지막 체크포인트에서 이어갑니다.
    """

    def __init__(self, executor: RunExecutor):
        self._executor = executor

    def train(self, cfg: RunConfig, on_step: Optional[StepCallback] = None) -> Result:
        return self._executor.run(
            run_training,
            plan_retry=resume_from_latest_checkpoint,
            label=f"train {cfg.output_dir}",
            cfg=cfg,
            on_step=on_step,
        )

    def evaluate(
        self,
        run_dir: Union[str, Path],
        episodes: int,
        seed: Optional[int] = None,
        checkpoint: Optional[Union[str, Path]] = None,
    ) -> Result:
        return self._executor.run(evaluate_run, run_dir=run_dir, episodes=episodes, seed=seed, checkpoint=checkpoint)
