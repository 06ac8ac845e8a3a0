"""
Flat key=value experiment configuration loader.
평탄한 key=value 설정 파일과 --key=value CLI 오버라이드를 RunConfig 로 변환합니다.

    # 주석
    env = pendulum
    total_steps = 20000
    n_pop = 64
"""
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, TypeAdapter, ValidationError

from app.core.exceptions import ConfigParseError
from app.core.logging import get_logger
from app.infrastructure.envs import get_env_spec
from app.schemas.run_config import CemConfig, GracConfig, RunConfig

logger = get_logger(__name__)

# 평탄 키 -> (중첩 경로, 해당 필드를 가진 모델)
_RUN_KEYS = ["env", "total_steps", "eval_interval", "eval_episodes", "seed", "output_dir", "resume_from", "checkpoint_interval"]
_CEM_KEYS = {"n_cem": "n_iter", "n_pop": "n_pop", "n_elite": "n_elite", "cem_sigma_floor": "sigma_floor", "cem_track_running_best": "track_running_best"}

FLAT_KEYS: Dict[str, Tuple[Tuple[str, ...], type]] = {}
for _key in _RUN_KEYS:
    FLAT_KEYS[_key] = ((_key,), RunConfig)
for _key in GracConfig.model_fields:
    if _key != "cem":
        FLAT_KEYS[_key] = (("grac", _key), GracConfig)
for _key, _field in _CEM_KEYS.items():
    FLAT_KEYS[_key] = (("grac", "cem", _field), CemConfig)

PRESET_KEY = "preset"

# 환경별 프로필: K, alpha 구간, CemLossWeight 분자(ActionDim 으로 나눔), reward scale
PRESETS: Dict[str, Dict[str, float]] = {
    "Ant-v2": {"K": 20, "alpha_start": 0.7, "alpha_end": 0.85, "cem_numerator": 1.0, "reward_scale": 1.0},
    "Hopper-v2": {"K": 20, "alpha_start": 0.85, "alpha_end": 0.95, "cem_numerator": 0.3, "reward_scale": 1.0},
    "HalfCheetah-v2": {"K": 50, "alpha_start": 0.7, "alpha_end": 0.85, "cem_numerator": 1.0, "reward_scale": 0.5},
    "Humanoid-v2": {"K": 20, "alpha_start": 0.7, "alpha_end": 0.85, "cem_numerator": 1.0, "reward_scale": 1.0},
    "Swimmer-v2": {"K": 20, "alpha_start": 0.5, "alpha_end": 0.75, "cem_numerator": 1.0, "reward_scale": 1.0},
    "Walker2d-v2": {"K": 20, "alpha_start": 0.8, "alpha_end": 0.9, "cem_numerator": 0.3, "reward_scale": 1.0},
}

Overrides = Union[Mapping[str, str], Sequence[str], None]


def valid_keys() -> List[str]:
    return sorted(list(FLAT_KEYS) + [PRESET_KEY])


def _coerce(key: str, raw: str, line: Optional[int]) -> Any:
    """pydantic 필드 타입으로 변환합니다. 실패하면 줄 번호를 담은 ConfigParseError."""
    path, model = FLAT_KEYS[key]
    field = model.model_fields[path[-1]]
    value: Any = raw.strip()
    if value.lower() in ("none", "null") and not field.is_required():
        value = None
    adapter = TypeAdapter(field.annotation)
    try:
        return adapter.validate_python(value)
    except ValidationError as first_error:
        # 정수 필드에 1e6 같은 표기 허용
        try:
            as_float = float(value)
            if as_float.is_integer():
                return adapter.validate_python(int(as_float))
        except (TypeError, ValueError, ValidationError):
            pass
        where = f"line {line}" if line is not None else "command line"
        raise ConfigParseError(
            f"{where}: invalid value {raw!r} for '{key}': {first_error.errors()[0]['msg']}",
            context={"key": key, "line": line, "value": raw},
        )


def _check_key(key: str, line: Optional[int]) -> None:
    if key not in FLAT_KEYS and key != PRESET_KEY:
        where = f"line {line}: " if line is not None else ""
        raise ConfigParseError(
            f"{where}unknown key '{key}'. Valid keys: {', '.join(valid_keys())}",
            context={"key": key, "line": line, "valid_keys": valid_keys()},
        )


def _read_file(path: Union[str, Path]) -> List[Tuple[str, str, int]]:
    entries = []
    text = Path(path).read_text(encoding="utf-8")
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"line {number}: expected 'key = value', got {raw_line!r}", context={"line": number})
        key, value = (part.strip() for part in line.split("=", 1))
        entries.append((key, value, number))
    return entries


def _read_overrides(overrides: Overrides) -> List[Tuple[str, str, None]]:
    if overrides is None:
        return []
    if isinstance(overrides, Mapping):
        return [(k.lstrip("-").replace("-", "_"), str(v), None) for k, v in overrides.items()]
    entries = []
    for item in overrides:
        if not item.startswith("--") or "=" not in item:
            raise ConfigParseError(f"Override must look like --key=value, got {item!r}", context={"override": item})
        key, value = item[2:].split("=", 1)
        entries.append((key.replace("-", "_"), value, None))
    return entries


def _set_path(tree: Dict[str, Any], path: Tuple[str, ...], value: Any) -> None:
    node = tree
    for part in path[:-1]:
        node = node.setdefault(part, {})
    node[path[-1]] = value


def parse_config(path: Optional[Union[str, Path]], cli_overrides: Overrides = None) -> RunConfig:
    """
    설정 파일과 CLI 오버라이드로 RunConfig 를 만듭니다.

    우선순위: 기본값 < preset < 파일의 명시 키 < CLI 오버라이드.
    cem_loss_weight 가 없으면 (preset 분자 또는 1.0) / action_dim 으로 정합니다.

    Raises:
        ConfigParseError: 알 수 없는 키, 타입 불일치, 불변식 위반
    """
    entries: List[Tuple[str, str, Optional[int]]] = []
    if path is not None:
        try:
            entries.extend(_read_file(path))
        except FileNotFoundError:
            raise ConfigParseError(f"Config file not found: {path}", context={"path": str(path)})
    entries.extend(_read_overrides(cli_overrides))

    explicit: Dict[str, Any] = {}
    preset_name: Optional[str] = None
    for key, raw, line in entries:
        _check_key(key, line)
        if key == PRESET_KEY:
            if raw not in PRESETS:
                raise ConfigParseError(
                    f"{'line ' + str(line) + ': ' if line else ''}unknown preset '{raw}'. Available: {sorted(PRESETS)}",
                    context={"line": line, "preset": raw},
                )
            preset_name = raw
            continue
        explicit[key] = _coerce(key, raw, line)

    values: Dict[str, Any] = {}
    cem_numerator = 1.0
    if preset_name is not None:
        preset = dict(PRESETS[preset_name])
        cem_numerator = preset.pop("cem_numerator")
        values.update(preset)
        logger.info(f"Applied preset '{preset_name}'")
    values.update(explicit)

    tree: Dict[str, Any] = {}
    for key, value in values.items():
        _set_path(tree, FLAT_KEYS[key][0], value)

    try:
        cfg = RunConfig.model_validate(tree)
    except ValidationError as e:
        details = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigParseError(f"Invalid configuration: {details}", context={"errors": details})

    return resolve_cem_loss_weight(cfg, cem_numerator)


def resolve_cem_loss_weight(cfg: RunConfig, numerator: float = 1.0) -> RunConfig:
    """cem_loss_weight 가 비어 있으면 numerator / action_dim 으로 채운 사본을 반환합니다."""
    if cfg.grac.cem_loss_weight is not None:
        return cfg
    action_dim = get_env_spec(cfg.env).action_dim
    return cfg.model_copy(update={"grac": cfg.grac.model_copy(update={"cem_loss_weight": numerator / action_dim})})


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _lookup(model: BaseModel, path: Tuple[str, ...]) -> Any:
    node: Any = model
    for part in path:
        node = getattr(node, part)
    return node


def dump_config(cfg: RunConfig) -> str:
    """parse_config 로 다시 읽을 수 있는 key=value 스냅샷."""
    lines = []
    for key, (path, _) in FLAT_KEYS.items():
        value = _lookup(cfg, path)
        if value is None:
            continue
        lines.append(f"{key}={_format_value(value)}")
    return "\n".join(lines) + "\n"
