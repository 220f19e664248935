"""
Run Registry Module

This module provides a RunRegistry class backed by TinyDB that indexes
completed scenario runs (manifest plus summary) and phase-sweep rows, so that
runs can be listed and retrieved by the CLI and the HTTP API.
"""

import os
import logging
from datetime import datetime
from typing import Any, Dict, List, Optional

import pytz
from tinydb import TinyDB, Query

logger = logging.getLogger(__name__)


class RunRegistry:
    """Handler for the TinyDB run index."""

    def __init__(self, db_path: str):
        """Open (or create) the registry file.

        Args:
            db_path: Path to the TinyDB JSON file.
        """
        logger.info(f"Initializing RunRegistry with path: {db_path}")
        self.db_path = db_path

        directory = os.path.dirname(db_path)
        try:
            if directory:
                os.makedirs(directory, exist_ok=True)
        except Exception as e:
            logger.error(f"Failed to create directory for registry: {str(e)}")
            raise

        try:
            self.db = TinyDB(db_path)
            self.runs_table = self.db.table('runs')
            self.sweeps_table = self.db.table('sweeps')
        except Exception as e:
            logger.error(f"Failed to initialize TinyDB: {str(e)}")
            raise

    def close(self) -> None:
        self.db.close()

    def record_run(self, manifest: Dict[str, Any], summary: Dict[str, Any]) -> int:
        """Store one run.

        Args:
            manifest: Run manifest; must contain ``run_id``.
            summary: Summary values of the run.

        Returns:
            TinyDB document id of the stored record.
        """
        run_id = manifest.get("run_id")
        logger.info(f"Recording run {run_id}")
        try:
            record = {
                "run_id": run_id,
                "preset": manifest.get("preset"),
                "name": manifest.get("name"),
                "output_dir": manifest.get("output_dir"),
                "recorded_at": datetime.now(pytz.UTC).isoformat(),
                "manifest": manifest,
                "summary": summary,
            }
            doc_id = self.runs_table.insert(record)
            logger.info(f"Run {run_id} stored with document ID: {doc_id}")
            return doc_id
        except Exception as e:
            logger.error(f"Error recording run: {str(e)}")
            raise

    def get_run(self, run_id: str) -> Optional[Dict[str, Any]]:
        """Return the record of ``run_id`` or None."""
        try:
            Run = Query()
            return self.runs_table.get(Run.run_id == run_id)
        except Exception as e:
            logger.error(f"Error getting run {run_id}: {str(e)}")
            return None

    def list_runs(self, preset: Optional[str] = None) -> List[Dict[str, Any]]:
        """List stored runs, optionally restricted to one preset."""
        try:
            if preset:
                Run = Query()
                runs = self.runs_table.search(Run.preset == preset)
            else:
                runs = self.runs_table.all()
            logger.info(f"Registry returned {len(runs)} runs")
            return runs
        except Exception as e:
            logger.error(f"Error listing runs: {str(e)}")
            return []

    def delete_run(self, run_id: str) -> bool:
        """Remove a run record; True when something was deleted."""
        logger.info(f"Deleting run {run_id}")
        try:
            Run = Query()
            removed = self.runs_table.remove(Run.run_id == run_id)
            if not removed:
                logger.warning(f"Run {run_id} not found in registry")
                return False
            return True
        except Exception as e:
            logger.error(f"Error deleting run: {str(e)}")
            return False

    def record_sweep_row(self, sweep_id: str, row: Dict[str, Any]) -> int:
        try:
            doc_id = self.sweeps_table.insert({"sweep_id": sweep_id, **row})
            logger.info(f"Sweep {sweep_id} row stored with document ID: {doc_id}")
            return doc_id
        except Exception as e:
            logger.error(f"Error recording sweep row: {str(e)}")
            raise

    def get_sweep(self, sweep_id: str) -> List[Dict[str, Any]]:
        try:
            Row = Query()
            return self.sweeps_table.search(Row.sweep_id == sweep_id)
        except Exception as e:
            logger.error(f"Error getting sweep {sweep_id}: {str(e)}")
            return []

    def backup(self, backup_dir: Optional[str] = None) -> Dict[str, Any]:
        """Copy the registry file next to it (or into ``backup_dir``).

        Returns:
            Dictionary with ``success`` and either ``backup_path`` or ``error``.
        """
        logger.info("Creating registry backup")
        try:
            timestamp = datetime.now(pytz.UTC).strftime("%Y%m%d_%H%M%S")
            backup_dir = backup_dir or os.path.dirname(self.db_path) or "."
            os.makedirs(backup_dir, exist_ok=True)
            backup_path = os.path.join(backup_dir, f"{os.path.basename(self.db_path)}.backup_{timestamp}")
            with open(self.db_path, 'r') as src_file:
                contents = src_file.read()
            with open(backup_path, 'w') as backup_file:
                backup_file.write(contents)
            logger.info(f"Registry backup created at: {backup_path}")
            return {"success": True, "backup_path": backup_path, "timestamp": timestamp}
        except Exception as e:
            error_msg = f"Error creating registry backup: {str(e)}"
            logger.error(error_msg)
            return {"success": False, "error": error_msg}
