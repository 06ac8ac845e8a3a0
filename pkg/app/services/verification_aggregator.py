"""
Aggregates the tabular verification checks into one report.
테이블형 검증 항목들의 결과를 종합하고 CSV / 리포트로 기록합니다.
"""
import csv
import io
from typing import Dict, List, Optional

from app.core.logging import get_logger
from app.core.result import Err, InvalidDataError, Ok, Result, SystemError
from app.infrastructure.artifact_store import ArtifactStore
from app.schemas.verification import CheckStatus, Status, VerificationReport
from app.services.tabular_verify import ImprovementMode
from app.services.verification_checks import (
    AgreementCheck,
    ContractionCheck,
    ConvergenceCheck,
    PolicyImprovementCheck,
    SeedResult,
    SuiteSettings,
    VerificationCheck,
    run_maxmin_suite,
)

logger = get_logger(__name__)

SEED_CSV = "tabular_seeds.csv"
REPORT_TXT = "report.txt"


class VerificationAggregator:
    """
    등록된 모든 VerificationCheck 를 실행하고 결과를 종합하는 서비스.
    """

    def __init__(self, suite: SuiteSettings, store: Optional[ArtifactStore] = None):
        self._suite = suite
        self._store = store
        self.seed_results: List[SeedResult] = []

    def _build_checks(self) -> List[VerificationCheck]:
        self.seed_results = run_maxmin_suite(self._suite) if self._suite.n_seeds > 0 else []
        return [
            ContractionCheck(self._suite),
            ConvergenceCheck(self.seed_results, self._suite.convergence_threshold),
            AgreementCheck(self.seed_results, self._suite.agreement_threshold),
            PolicyImprovementCheck(self._suite, ImprovementMode.Q_LOSS),
            PolicyImprovementCheck(self._suite, ImprovementMode.CEM),
        ]

    def check_all(self) -> VerificationReport:
        """
        모든 검증을 순서대로 실행합니다. 검증기 자체가 예외를 던지면 FAIL 로 기록합니다.
        """
        logger.info("=" * 70)
        logger.info(
            f"Tabular verification: {self._suite.n_seeds} seeds x {self._suite.samples} samples, "
            f"{self._suite.policy_pairs} policy pairs"
        )
        logger.info("=" * 70)

        details: Dict[str, CheckStatus] = {}
        try:
            checks = self._build_checks()
        except Exception as e:
            logger.error(f"Max-min suite raised an unexpected exception: {e}", exc_info=True)
            checks = [ContractionCheck(self._suite)]
            details["maxmin_suite"] = CheckStatus(status=Status.FAIL, message=f"Suite failed with exception: {type(e).__name__}")

        for check in checks:
            try:
                details[check.name] = check.check()
            except Exception as e:
                logger.error(f"Verification check '{check.name}' raised an unexpected exception: {e}")
                details[check.name] = CheckStatus(
                    status=Status.FAIL, message=f"Checker failed with exception: {type(e).__name__}"
                )
            outcome = details[check.name]
            log = logger.info if outcome.status == Status.PASS else logger.warning
            log(f"{'✓' if outcome.status == Status.PASS else '✗'} {check.name}: {outcome.message}")

        overall = Status.PASS if all(d.status == Status.PASS for d in details.values()) else Status.FAIL
        logger.info(f"Tabular verification finished: {overall.value.upper()}")
        return VerificationReport(overall=overall, details=details)

    def run(self) -> Result:
        """
        검증을 실행하고 (store 가 있으면) 시드별 CSV 와 리포트를 기록합니다.

        Returns:
            Ok(VerificationReport) 또는 Err
        """
        report = self.check_all()
        if self._store is None:
            return Ok(report)
        try:
            self._store.write_text(SEED_CSV, self.seed_csv())
            self._store.write_text(REPORT_TXT, format_report(report))
        except PermissionError as e:
            return Err(InvalidDataError(error=e))
        except OSError as e:
            return Err(SystemError(error=e))
        return Ok(report)

    def seed_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["seed", "q2_sup_error", "q1_q2_sup_gap"])
        for r in self.seed_results:
            writer.writerow([r.seed, format(r.q2_error, ".10g"), format(r.q1_q2_gap, ".10g")])
        return buffer.getvalue()


def format_report(report: VerificationReport) -> str:
    lines = [f"overall: {report.overall.value.upper()}"]
    for name, status in report.details.items():
        lines.append(f"{status.status.value.upper():4s}  {name}: {status.message}")
    return "\n".join(lines) + "\n"
