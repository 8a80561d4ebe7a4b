# utils/error_handler.py

import json
import logging
import traceback
from typing import Any, Dict, Optional

from memgauge.errors import MemgaugeError

logger = logging.getLogger("memgauge")


class ErrorHandler:
    """Class for handling and logging errors."""

    @staticmethod
    def log_error(error, context=None):
        """Log an error together with its traceback.

        Args:
            error (Exception): The error to log
            context (str, optional): Context information
        """
        log_message = f"ERROR: {error}"
        if context:
            log_message = f"{context} - {log_message}"

        logger.error(log_message)
        if error.__traceback__ is not None:
            logger.debug("".join(traceback.format_exception(type(error), error, error.__traceback__)))

    @staticmethod
    def exit_code(error) -> int:
        if isinstance(error, MemgaugeError):
            return error.exit_code
        if isinstance(error, (FileNotFoundError, PermissionError)):
            return 3
        return 1

    @staticmethod
    def error_record(error, stage: Optional[str] = None) -> Dict[str, Any]:
        """Machine-readable record describing a failed stage."""
        if isinstance(error, MemgaugeError):
            body = error.to_dict()
        else:
            body = {"error": type(error).__name__, "message": str(error)}
            if isinstance(error, OSError) and error.filename:
                body["path"] = str(error.filename)
        return {
            "status": "failed",
            "stage": stage,
            **body,
            "exit_code": ErrorHandler.exit_code(error),
        }

    @staticmethod
    def handle_exception(error, context=None, stream=None) -> int:
        """Log an error, write its record as one JSON line and return the exit code."""
        ErrorHandler.log_error(error, context)
        record = ErrorHandler.error_record(error, stage=context)
        if stream is not None:
            stream.write(json.dumps(record, sort_keys=True) + "\n")
            stream.flush()
        return record["exit_code"]
