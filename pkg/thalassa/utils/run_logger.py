# thalassa/utils/run_logger.py
"""
Per-command run log.
Appends every run of a command to one consolidated daily text file
(logs/<command>_YYYYMMDD.log), kept outside the output directory.
"""

import time
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Union

from loguru import logger


class RunLogger:
    """
    Human-readable step log of one command run:
    - configuration hash and seed
    - each pipeline step with details and duration
    - final result summary or the error that stopped the run
    """

    def __init__(self, command: str, run_name: str = "", base_dir: Union[str, Path] = "logs",
                 enabled: bool = True):
        """
        Args:
            command: Command name (e.g. 'sweep', 'invert')
            run_name: Identifier shown in the header (e.g. config hash)
            base_dir: Directory for the daily log files
            enabled: False turns every call into a no-op
        """
        self.command = command
        self.run_name = self._sanitize_name(run_name or command)
        self.enabled = enabled
        self.base_dir = Path(base_dir)
        self.start_time = datetime.now()
        self._t0 = time.perf_counter()
        self.step_count = 0
        self.log_file = self.base_dir / f"{command}_{self.start_time.strftime('%Y%m%d')}.log"
        if self.enabled:
            self.base_dir.mkdir(parents=True, exist_ok=True)
            self._write_header()

    @staticmethod
    def _sanitize_name(name: str) -> str:
        invalid_chars = '<>:"/\\|?*'
        for char in invalid_chars:
            name = name.replace(char, "_")
        return name[:40]

    def _write(self, text: str) -> None:
        if not self.enabled:
            return
        with open(self.log_file, "a", encoding="utf-8") as f:
            f.write(text)

    def _write_header(self) -> None:
        self._write(
            f"\n{'=' * 80}\n"
            f"RUN: {self.run_name}\n"
            f"{'=' * 80}\n"
            f"Command: {self.command.upper()} | Started: {self.start_time.strftime('%Y-%m-%d %H:%M:%S')}\n"
            f"{'─' * 80}\n"
        )

    def log_step(
        self,
        step_name: str,
        status: str = "done",
        details: Optional[Dict[str, Any]] = None,
        duration_ms: Optional[float] = None,
    ) -> None:
        self.step_count += 1
        stamp = datetime.now().strftime("%H:%M:%S")
        text = f"\n[{stamp}] STEP {self.step_count}: {step_name.upper()}\n{'─' * 60}\nStatus: {status}\n"
        if duration_ms is not None:
            text += f"Duration: {duration_ms:.0f}ms\n"
        if details:
            text += "Details:\n"
            for key, value in details.items():
                text += f"  • {key}: {value}\n"
        self._write(text + "\n")
        logger.debug(f"[{self.run_name}] Step {self.step_count}: {step_name}")

    def log_result(self, result: Dict[str, Any]) -> None:
        elapsed = time.perf_counter() - self._t0
        text = (
            f"\n{'=' * 80}\n"
            f"[{datetime.now().strftime('%H:%M:%S')}] RUN COMPLETE\n"
            f"{'=' * 80}\n"
            f"Total Steps: {self.step_count}\n"
            f"Total Time: {elapsed:.2f} seconds\n\n"
            "Result Summary:\n"
        )
        for key, value in result.items():
            text += f"  • {key}: {value}\n"
        self._write(text + f"\n{'=' * 80}\n")
        if self.enabled:
            logger.info(f"📁 [{self.run_name}] Run log complete: {self.log_file}")

    def log_error(self, error: Exception, step_name: str = "unknown") -> None:
        self._write(
            f"\n[{datetime.now().strftime('%H:%M:%S')}] ❌ ERROR in {step_name}\n"
            f"{'─' * 60}\n"
            f"Type: {type(error).__name__}\n"
            f"Message: {error}\n"
            f"{'─' * 60}\n\n"
        )
        logger.error(f"[{self.run_name}] Error in {step_name}: {error}")
