# services/study_queue.py

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional

from memgauge.models.run import RateRun, RunStatus
from memgauge.utils.error_handler import ErrorHandler

logger = logging.getLogger("memgauge")


class StudyQueue:
    """
    Runs independent noise-rate pipelines in parallel worker slots
    """
    def __init__(self, process: Callable[[RateRun], Any], max_concurrent_jobs: int = 1):
        self.process = process
        self.processing_queue: List[RateRun] = []
        self.currently_processing: int = 0
        self.completed_jobs: Dict[str, Dict[str, Any]] = {}
        self.failed_jobs: Dict[str, Dict[str, Any]] = {}
        self.results: Dict[str, Any] = {}
        self.max_concurrent_jobs = max(1, max_concurrent_jobs)
        self.processing_lock = threading.Lock()

    def add_run(self, run: RateRun) -> str:
        """
        Add a pipeline to the queue
        """
        run.status = RunStatus.QUEUED
        run.queue_time = datetime.now()
        with self.processing_lock:
            self.processing_queue.append(run)
        logger.info(f"Added run {run.id} to the queue")
        return run.id

    def run_all(self) -> List[RateRun]:
        """
        Process every queued run; returns the runs in submission order
        """
        with self.processing_lock:
            runs = list(self.processing_queue)
        if self.max_concurrent_jobs == 1:
            for run in runs:
                self._process_run(run)
        else:
            with ThreadPoolExecutor(max_workers=self.max_concurrent_jobs) as executor:
                list(executor.map(self._process_run, runs))
        logger.info(f"Queue drained: {len(self.completed_jobs)} completed, {len(self.failed_jobs)} failed")
        return runs

    def _process_run(self, run: RateRun):
        """
        Process a single run (may execute in a worker thread)
        """
        with self.processing_lock:
            self.processing_queue.remove(run)
            self.currently_processing += 1
        run.status = RunStatus.PROCESSING
        run.processing_start_time = datetime.now()
        logger.info(f"Processing run {run.id}")

        try:
            self.results[run.id] = self.process(run)
            run.status = RunStatus.COMPLETED
            run.completion_time = datetime.now()
            self._record_completed_job(run)
        except Exception as e:
            ErrorHandler.log_error(e, f"run {run.id} ({run.stage})")
            run.status = RunStatus.FAILED
            run.error_record = ErrorHandler.error_record(e, stage=run.stage)
            self._record_failed_job(run)
        finally:
            with self.processing_lock:
                self.currently_processing -= 1

    def _record_completed_job(self, run: RateRun):
        """Record a completed job"""
        with self.processing_lock:
            self.completed_jobs[run.id] = {
                "run": run,
                "processing_time": (run.completion_time - run.processing_start_time).total_seconds()
                if run.completion_time and run.processing_start_time else None
            }
        logger.info(f"Run {run.id} completed")

    def _record_failed_job(self, run: RateRun):
        """Record a failed job"""
        with self.processing_lock:
            self.failed_jobs[run.id] = {
                "run": run,
                "error": run.error_record,
                "timestamp": datetime.now()
            }

    def get_run_status(self, run_id: str) -> Optional[Dict[str, Any]]:
        """
        Get the status of a run
        """
        with self.processing_lock:
            for position, run in enumerate(self.processing_queue, start=1):
                if run.id == run_id:
                    return {"id": run_id, "status": run.status.value, "queue_position": position}
            if run_id in self.completed_jobs:
                job = self.completed_jobs[run_id]
                return {"id": run_id, "status": job["run"].status.value, "processing_time": job["processing_time"]}
            if run_id in self.failed_jobs:
                job = self.failed_jobs[run_id]
                return {"id": run_id, "status": job["run"].status.value, "error": job["error"]}
        return None

    def get_queue_status(self) -> Dict[str, Any]:
        """
        Get the current status of the queue
        """
        with self.processing_lock:
            return {
                "queue_length": len(self.processing_queue),
                "currently_processing": self.currently_processing,
                "completed_jobs": len(self.completed_jobs),
                "failed_jobs": len(self.failed_jobs),
                "max_concurrent_jobs": self.max_concurrent_jobs,
            }
