import logging
import os
import sqlite3

from database.init_db import init_results_db, record_report, results_db_path
from src.commands.report_handler import ReportHandler
from src.harness.run_report import summarize, write_report, write_summary_csv
from src.harness.scenario import run_scenario1, run_scenario2
from src.parser.config_parser import ConfigError, default_scenario1, default_scenario2, load_config
from src.parser.import_csv import IterationCSVImporter

logger = logging.getLogger(__name__)


class CommandHandler:
    def __init__(self):
        self.command_map = {
            "scenario1": self.handle_scenario1,
            "scenario2": self.handle_scenario2,
            "summarize": self.handle_summarize,
            "report": self.handle_report,
        }

    def execute_command(self, command, args):
        if command not in self.command_map:
            raise ValueError(f"Unknown command: {command}")
        return self.command_map[command](args)

    def _load(self, args, default):
        config = load_config(args.config) if args.config else default()
        return config.with_overrides(seed=args.seed, agent=getattr(args, "agent", None),
                                     gso_enabled=False if getattr(args, "no_gso", False) else None, out=args.out)

    def _persist(self, report, out_dir):
        write_report(report, out_dir)
        conn = init_results_db(results_db_path(out_dir))
        try:
            run_id = record_report(conn, report)
        finally:
            conn.close()
        return run_id

    def _run_summary(self, report, out_dir, run_id):
        lines = [f"{report.scenario}: {len(report.seeds)} repetition(s), run {run_id}, results in '{out_dir}'"]
        for (service, agent, phase), mean in report.phase_means().items():
            lines.append(f"  phase {phase} {service} ({agent}): mean phi_sigma {mean:.4f}")
        if report.swaps:
            lines.append(f"  swaps executed: {len(report.swaps)}")
        return "\n".join(lines)

    def handle_scenario1(self, args):
        """Run the threshold-schedule scenario."""
        config = self._load(args, default_scenario1)
        report = run_scenario1(config)
        run_id = self._persist(report, config.output.dir)
        return self._run_summary(report, config.output.dir, run_id)

    def handle_scenario2(self, args):
        """Run the resource-contention scenario."""
        config = self._load(args, default_scenario2)
        report = run_scenario2(config)
        run_id = self._persist(report, config.output.dir)
        return self._run_summary(report, config.output.dir, run_id)

    def handle_summarize(self, args):
        """Aggregate one or more iteration CSVs into a summary CSV."""
        reports = []
        for path in args.inputs:
            csv_file = os.path.join(path, "iterations.csv") if os.path.isdir(path) else path
            if not os.path.exists(csv_file):
                raise ConfigError(f"inputs: '{csv_file}' does not exist")
            reports.append(IterationCSVImporter().import_iterations_csv(csv_file))
        table = summarize(reports)
        out_dir = args.out or "."
        os.makedirs(out_dir, exist_ok=True)
        out_file = os.path.join(out_dir, "summary.csv")
        write_summary_csv(table, out_file)
        return f"Summarized {len(reports)} report(s): {len(table.rows)} row(s) x {len(table.columns)} iteration(s) -> '{out_file}'"

    def handle_report(self, args):
        out_dir = args.out or "results"
        db_path = results_db_path(out_dir)
        if not os.path.exists(db_path):
            return f"Error: no results database at '{db_path}'."
        conn = sqlite3.connect(db_path)
        try:
            report_args = [] if args.run_id is None else [args.run_id]
            return ReportHandler(conn).report(args.report_type, report_args)
        finally:
            conn.close()
