"""
@Title: LiftPose Lab CLI
@Description: 합성 데이터 생성 -> 2D perceptron 학습 -> 3D integrator 학습 -> MPJPE 평가 -> ablation -> 리포트까지
              모든 단계를 subcommand로 제공하는 진입점 (click)
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
import json
import time
import logging
import functools
import dataclasses
from pathlib import Path
from typing import Optional, Sequence, Tuple

import click

# 02src 참조 설정
PROJECT_ROOT = Path(__file__).resolve().parent
SRC_DIR = PROJECT_ROOT / "02src"
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

import config
from config import ExperimentConfig, FusionInputVariant, IntegratorArch
from errors import DatasetError, InternalError, LiftPoseError
from engines.perceptron import build_perceptron, load_perceptron, save_perceptron
from engines.integrator import build_integrator, load_integrator, save_integrator
from engines.trainer import configure_runtime, train_stage1, train_stage2
from engines.metrics import evaluate_mpjpe, load_predictions, save_predictions, save_report_tables
from engines.ablation import AblationSuite, run_ablation
from data_loaders.dataset import DatasetIndex, load_dataset, synthesize
from data_loaders import io as local_io
from ui.report import collect_reports, emit_report, pick_samples, plot_pose_samples

# 2. Constants
MODULE_TAG = "[CLI]"
logger = logging.getLogger("liftpose")


# 3. Helper Functions
COMMON_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
                 help="실험 설정 YAML (기본: 02src/experiment_config.yaml)"),
    click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                 help="설정 덮어쓰기 (예: --set stage2.epochs=5)"),
    click.option("--seed", type=int, default=None, help="데이터/초기화/셔플 seed"),
    click.option("--log-json", is_flag=True, default=False, help="로그 파일을 JSON 레코드로 기록"),
]


def common_options(func):
    """모든 subcommand 공통 옵션: --config, --set, --seed, --log-json"""
    for option in reversed(COMMON_OPTIONS):
        func = option(func)
    return func


def _fail(err: LiftPoseError) -> None:
    logger.error(f"❌ [{err.category}] {err}")
    click.echo(json.dumps(err.to_dict(), ensure_ascii=False), err=True)
    sys.exit(err.exit_code)


def cli_errors(step: str):
    """LiftPoseError -> ❌ 로그 + stderr JSON 한 줄 + category별 exit code. 그 밖의 예외는 internal (exit 1)"""
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            start = time.time()
            try:
                func(*args, **kwargs)
            except LiftPoseError as e:
                _fail(e)
            except (click.ClickException, click.exceptions.Exit, click.Abort):
                raise
            except Exception as e:
                logger.exception(f"❌ {MODULE_TAG} {step} 예기치 않은 오류")
                _fail(InternalError.wrap(e))
            logger.info(f"✅ {MODULE_TAG} {step} 완료 ({time.time() - start:.2f}초)")
        return wrapper
    return decorator


def _prepare(step: str, config_path: Optional[Path], overrides: Sequence[str], seed: Optional[int],
             log_json: bool, seed_keys: Sequence[str] = ()) -> ExperimentConfig:
    """설정 로드 + 로깅/런타임 초기화. --seed는 seed_keys에 나열된 설정 값을 덮어씁니다."""
    parsed = dict(config.parse_override(text) for text in overrides)
    if seed is not None:
        for key in seed_keys:
            parsed.setdefault(key, seed)
    cfg = config.load_experiment_config(config_path, parsed)
    log_file = config.setup_logging(step.replace("-", "_"), log_json or cfg.runtime.log_json)
    configure_runtime(seed if seed is not None else 0, cfg.runtime.num_threads)
    logger.info(f"🚀 {MODULE_TAG} {step} 시작 (profile {cfg.runtime.profile}, dtype {cfg.runtime.dtype}, "
                f"log {log_file.name})")
    return cfg


def _dataset(path: Optional[Path], default: Path = config.DATASET_DIR) -> DatasetIndex:
    root = Path(path) if path else default
    if not (root / config.DATASET_FILES["index"]).exists():
        raise DatasetError(f"no dataset at {root}; run `main.py synth` first")
    return load_dataset(root)


def _view_tuple(views: Tuple[int, ...], dataset: DatasetIndex) -> Tuple[int, ...]:
    return tuple(views) if views else tuple(range(dataset.num_views))


# 4. CLI Group
@click.group()
def cli():
    """LiftPose Lab: 다시점 2D heatmap -> 3D 관절 좌표 lifting 실험 도구"""


# 5. Subcommands
@cli.command()
@common_options
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="데이터셋 디렉토리 (기본: 01DATA/synthetic)")
@click.option("--overwrite", is_flag=True, default=False, help="비어 있지 않은 출력 디렉토리를 덮어쓰기")
@click.option("--occluded-view", type=int, default=None, help="occluder를 넣을 시점 index")
@cli_errors("synth")
def synth(config_path, overrides, seed, log_json, out, overwrite, occluded_view):
    """합성 lifting 데이터셋 생성 (이미지 + 2D/3D 관절 + 카메라 + 정규화 파라미터)"""
    cfg = _prepare("synth", config_path, overrides, seed, log_json)
    rig_cfg = cfg.rig
    if occluded_view is not None:
        rig_cfg = dataclasses.replace(rig_cfg, occlusion=dataclasses.replace(rig_cfg.occlusion, view=occluded_view))
    index = synthesize(rig_cfg, seed or 0, out or config.DATASET_DIR, overwrite)
    logger.info(f"ℹ️ {MODULE_TAG} {len(index.records)} records, {index.num_views} views -> {index.root}")


@cli.command()
@common_options
@click.option("--dataset", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="pretrain 피험자 풀 (없으면 생성)")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None, help="체크포인트 디렉토리")
@cli_errors("pretrain")
def pretrain(config_path, overrides, seed, log_json, dataset, out):
    """별도 피험자 풀에서 stage-1 학습 -> train-2d --init 용 체크포인트"""
    cfg = _prepare("pretrain", config_path, overrides, seed, log_json, ("perceptron.seed", "stage1.seed"))
    root = dataset or config.PRETRAIN_DATASET_DIR
    if (root / config.DATASET_FILES["index"]).exists():
        index = load_dataset(root)
    else:
        index = synthesize(cfg.rig, seed or 0, root, subject_offset=cfg.rig.pretrain_subject_offset)
    perceptron = build_perceptron(cfg.perceptron, cfg.runtime.dtype)
    # pretrain 풀은 split 구분 없이 전체 사용
    result = train_stage1(perceptron, index.split("all"), cfg.stage1)

    out_dir = out or config.CHECKPOINT_DIR
    save_perceptron(perceptron, out_dir / config.CHECKPOINT_FILES["pretrained"],
                    extra={"dataset": str(index.root), "final_loss": result.final_loss})
    logger.info(f"💾 {MODULE_TAG} pretrained perceptron 저장: {out_dir / config.CHECKPOINT_FILES['pretrained']}")


@cli.command("train-2d")
@common_options
@click.option("--dataset", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None, help="체크포인트 디렉토리")
@click.option("--init", "init_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="시작 perceptron 체크포인트 (pretrain 결과)")
@cli_errors("train-2d")
def train_2d(config_path, overrides, seed, log_json, dataset, out, init_path):
    """Stage 1: train split 이미지로 view perceptron heatmap 학습"""
    cfg = _prepare("train-2d", config_path, overrides, seed, log_json, ("perceptron.seed", "stage1.seed"))
    index = _dataset(dataset)
    if init_path is not None:
        perceptron = load_perceptron(init_path, cfg.runtime.dtype)
        logger.info(f"📂 {MODULE_TAG} 시작 가중치: {init_path}")
    else:
        perceptron = build_perceptron(cfg.perceptron, cfg.runtime.dtype)
    result = train_stage1(perceptron, index.split("train"), cfg.stage1)

    out_dir = out or config.CHECKPOINT_DIR
    save_perceptron(perceptron, out_dir / config.CHECKPOINT_FILES["perceptron"],
                    extra={"dataset": str(index.root), "init": str(init_path or ""), "final_loss": result.final_loss})
    local_io.save_csv(result.curve, out_dir / config.CHECKPOINT_FILES["stage1_curve"])


@cli.command("train-3d")
@common_options
@click.option("--dataset", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None, help="체크포인트 디렉토리")
@click.option("--perceptron", "perceptron_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--arch", type=click.Choice([a.value for a in IntegratorArch]), default=None)
@click.option("--variant", type=click.Choice([v.value for v in FusionInputVariant]), default=None)
@click.option("--views", type=int, multiple=True, help="사용할 시점 index (반복 지정, 기본: 전체)")
@click.option("--finetune-perceptron", is_flag=True, default=False, help="perceptron도 stage 2에서 함께 학습")
@cli_errors("train-3d")
def train_3d(config_path, overrides, seed, log_json, dataset, out, perceptron_path, arch, variant, views,
             finetune_perceptron):
    """Stage 2: 고정된 perceptron 출력으로 multi-view integrator 학습"""
    cfg = _prepare("train-3d", config_path, overrides, seed, log_json, ("integrator.seed", "stage2.seed"))
    index = _dataset(dataset)
    out_dir = out or config.CHECKPOINT_DIR
    perceptron = load_perceptron(perceptron_path or out_dir / config.CHECKPOINT_FILES["perceptron"],
                                 cfg.runtime.dtype)
    view_order = _view_tuple(views, index)
    icfg = dataclasses.replace(cfg.integrator, num_views=len(view_order))
    integrator = build_integrator(IntegratorArch(arch or icfg.arch), FusionInputVariant(variant or icfg.variant),
                                  icfg, perceptron.cfg, cfg.runtime.dtype)
    stage2 = dataclasses.replace(cfg.stage2, finetune_perceptron=finetune_perceptron or cfg.stage2.finetune_perceptron)
    result = train_stage2(integrator, perceptron, index.split("train", views=view_order), stage2)

    save_integrator(integrator, out_dir / config.CHECKPOINT_FILES["integrator"], view_order,
                    extra={"dataset": str(index.root), "finetuned": stage2.finetune_perceptron,
                           "final_loss": result.final_loss})
    local_io.save_csv(result.curve, out_dir / config.CHECKPOINT_FILES["stage2_curve"])
    if stage2.finetune_perceptron:
        path = out_dir / config.CHECKPOINT_FILES["finetuned_perceptron"]
        save_perceptron(perceptron, path, extra={"dataset": str(index.root)})
        logger.info(f"ℹ️ {MODULE_TAG} fine-tune된 perceptron은 eval --perceptron {path} 로 사용하세요")


@cli.command("eval")
@common_options
@click.option("--dataset", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None, help="결과 디렉토리")
@click.option("--perceptron", "perceptron_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--integrator", "integrator_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--experiment", default="default", help="리포트에 기록될 실험 이름")
@cli_errors("eval")
def evaluate(config_path, overrides, seed, log_json, dataset, out, perceptron_path, integrator_path, experiment):
    """test split(repetition 2) MPJPE 평가 -> 프레임/관절/task 테이블 + 예측 좌표"""
    cfg = _prepare("eval", config_path, overrides, seed, log_json)
    index = _dataset(dataset)
    perceptron = load_perceptron(perceptron_path or config.CHECKPOINT_DIR / config.CHECKPOINT_FILES["perceptron"],
                                 cfg.runtime.dtype)
    integrator, view_order = load_integrator(
        integrator_path or config.CHECKPOINT_DIR / config.CHECKPOINT_FILES["integrator"], cfg.runtime.dtype)
    test_split = index.split("test", views=view_order)

    report = evaluate_mpjpe(perceptron, integrator, test_split, index.norm_params, experiment=experiment,
                            batch_size=cfg.stage2.batch_size,
                            meta={"arch": integrator.cfg.arch.value, "variant": integrator.cfg.variant.value})
    out_dir = out or config.OUTPUT_DIR
    save_report_tables(report, out_dir)
    save_predictions(test_split.frame, report.predictions_mm, test_split.poses3d(),
                     out_dir / config.OUTPUT_FILES["predictions"])
    click.echo(report.summary())


@cli.command()
@common_options
@click.option("--suite", type=click.Choice([s.value for s in AblationSuite]), required=True)
@click.option("--dataset", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="기본: inputs/encoders는 01DATA/synthetic, views는 01DATA/synthetic_occluded (없으면 생성)")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None, help="결과 디렉토리")
@click.option("--init", "init_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="seed별 stage 1의 시작 perceptron 체크포인트")
@click.option("--seeds", type=int, multiple=True, help="ablation seed (반복 지정, 기본: ablation.seeds)")
@cli_errors("ablate")
def ablate(config_path, overrides, seed, log_json, suite, dataset, out, init_path, seeds):
    """같은 seed·데이터·학습 예산으로 arm들을 비교 (inputs | encoders | views)"""
    cfg = _prepare("ablate", config_path, overrides, seed, log_json)
    suite = AblationSuite(suite)
    if dataset is not None:
        index = _dataset(dataset)
    elif suite == AblationSuite.VIEW_COUNT:
        index = _occluded_dataset(cfg, seed or 0)
    else:
        index = _dataset(None)
    result = run_ablation(suite, cfg, list(seeds) or list(cfg.ablation.seeds), index, out or config.OUTPUT_DIR,
                          init_checkpoint=init_path)
    click.echo(result.summary.to_string(index=False))


def _occluded_dataset(cfg: ExperimentConfig, seed: int) -> DatasetIndex:
    """views suite 전용: ablation.occluded_view 시점에 occluder가 들어간 데이터셋"""
    root = config.OCCLUDED_DATASET_DIR
    if (root / config.DATASET_FILES["index"]).exists():
        return load_dataset(root)
    if cfg.ablation.occluded_view is None:
        raise DatasetError("views suite needs ablation.occluded_view or an explicit --dataset")
    occlusion = dataclasses.replace(cfg.rig.occlusion, view=cfg.ablation.occluded_view)
    logger.info(f"ℹ️ {MODULE_TAG} occluded 데이터셋 생성 (view {cfg.ablation.occluded_view})")
    return synthesize(dataclasses.replace(cfg.rig, occlusion=occlusion), seed, root)


@cli.command()
@common_options
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="eval/ablate 결과가 있는 디렉토리 (리포트도 여기에 저장)")
@click.option("--error-bar", type=click.Choice(["variance", "std"]), default="variance")
@click.option("--samples", type=int, default=4, help="pose sample 그림에 넣을 프레임 수")
@cli_errors("report")
def report(config_path, overrides, seed, log_json, out, error_bar, samples):
    """메트릭 테이블 + suite별 피험자 MPJPE 차트 + 예측/GT pose sample 그림"""
    _prepare("report", config_path, overrides, seed, log_json)
    out_dir = out or config.OUTPUT_DIR
    paths = emit_report(collect_reports(out_dir), out_dir, error_bar)

    predictions_path = out_dir / config.OUTPUT_FILES["predictions"]
    if predictions_path.exists() and samples > 0:
        meta, pred, gt = load_predictions(predictions_path)
        picks = pick_samples(pred, gt, samples)
        titles = [f"{meta['seq'].iloc[i]} f{int(meta['frame'].iloc[i])}" for i in picks]
        paths["pose_samples"] = plot_pose_samples(pred[picks], gt[picks],
                                                  out_dir / config.OUTPUT_FILES["pose_samples"], titles)
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


if __name__ == "__main__":
    cli()
