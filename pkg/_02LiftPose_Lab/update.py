"""
@Title: One-Click Pipeline Updater
@Description: 합성 데이터 생성부터 2D/3D 학습, MPJPE 평가, 리포트까지 main.py의 subcommand를 순차적으로 자동 실행합니다.
@Author: Allen
@Date: 2026-10-18
"""

import sys
import subprocess
import time
from pathlib import Path
from typing import List

# 프로젝트 루트 경로 설정 (_02LiftPose_Lab)
PROJECT_ROOT = Path(__file__).resolve().parent
MAIN_SCRIPT = PROJECT_ROOT / "main.py"


def run_step(args: List[str], step_name: str):
    """main.py subcommand 하나를 실행하고 결과를 출력합니다."""
    print(f"\n{'=' * 60}")
    print(f"🚀 [Step: {step_name}] 실행 중...")
    print(f"📂 명령: main.py {' '.join(args)}")
    print(f"{'=' * 60}")

    start_time = time.time()

    try:
        # 현재 실행 중인 파이썬 인터프리터(가상환경 포함)를 사용하여 서브 프로세스 실행
        subprocess.run(
            [sys.executable, str(MAIN_SCRIPT), *args],
            check=True,
            text=True,
            capture_output=False  # 로그를 실시간으로 터미널에 출력
        )
        elapsed = time.time() - start_time
        print(f"\n✅ [Success] {step_name} 완료 ({elapsed:.2f}초)")

    except subprocess.CalledProcessError as e:
        print(f"\n❌ [Error] {step_name} 실행 중 오류 발생!")
        print(f"Exit Code: {e.returncode}")
        sys.exit(1)  # 파이프라인 즉시 중단


def main():
    print(f"🔥 LiftPose Lab 학습/평가 파이프라인 가동 시작...")

    # update.py 뒤에 붙인 인자(--config, --set 등)는 모든 단계에 그대로 전달
    passthrough = sys.argv[1:]

    # 실행할 단계 목록 (순서 보장)
    pipeline = [
        (["synth", "--overwrite"], "1. 합성 데이터셋 생성 (Synthetic Rig)"),
        (["train-2d"], "2. View Perceptron 학습 (Stage 1, 2D heatmap)"),
        (["train-3d"], "3. Multi-view Integrator 학습 (Stage 2, 3D pose)"),
        (["eval"], "4. MPJPE 평가 (test split)"),
        (["report"], "5. 메트릭 테이블/차트 생성 (Report)"),
    ]

    if not MAIN_SCRIPT.exists():
        print(f"❌ 파일이 존재하지 않습니다: {MAIN_SCRIPT}")
        sys.exit(1)

    total_start = time.time()

    for args, step_name in pipeline:
        run_step(args + passthrough, step_name)

    total_elapsed = time.time() - total_start
    print(f"\n{'=' * 60}")
    print(f"🎉 모든 파이프라인 단계가 성공적으로 완료되었습니다!")
    print(f"⏱️ 총 소요 시간: {total_elapsed:.2f}초")
    print(f"{'=' * 60}")
    print(f"\n💡 03Output/20Metrics_Table.csv 와 chart_eval.png 에서 결과를 확인하세요.")
    print(f"💡 비교 실험은 'python main.py ablate --suite inputs|encoders|views' 로 실행합니다.")


if __name__ == "__main__":
    main()
