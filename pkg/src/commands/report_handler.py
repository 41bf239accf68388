import sqlite3


class ReportHandler:
    """
    Renders tabular reports from the results database written by scenario runs.
    Every report accepts an optional run id and defaults to the latest run.
    """

    def __init__(self, db_connection):
        """Initialize with a database connection"""
        self.db = db_connection

    def report(self, report_type, args):
        """
        Dynamically call the appropriate report method based on report_type.

        Args:
            report_type: The type of report to generate (e.g., 'phase_means')
            args: List of arguments to pass to the report method

        Returns:
            The report string or an error message if the report type doesn't exist
        """
        method_name = f"report_{report_type}"
        if not hasattr(self, method_name):
            return f"Error: Report type '{report_type}' is not supported."

        report_method = getattr(self, method_name)
        try:
            return report_method(*args)
        except TypeError as e:
            return f"Error calling {report_type} report: {str(e)}"

    def report_runs(self):
        """List every recorded run."""
        try:
            rows = self._execute_query(
                "SELECT run_id, scenario, seeds, phases, substr(fingerprint, 1, 12) FROM runs ORDER BY run_id"
            )
            if not rows:
                return "No runs recorded."
            return self._format_tabular_report("Recorded runs", ["Run", "Scenario", "Seeds", "Phases", "Fingerprint"], rows)
        except sqlite3.Error as e:
            return self._format_error("listing runs", e)

    def report_phase_means(self, run_id=None):
        """
        Mean and spread of phi_sigma per phase, service and agent.

        Args:
            run_id: Run to report on; the latest run when omitted

        Returns:
            Formatted report string
        """
        try:
            run_id = self._resolve_run(run_id)
            if isinstance(run_id, str):
                return run_id
            rows = self._execute_query('''
                SELECT phase, service, agent, AVG(phi_sigma), MIN(phi_sigma), MAX(phi_sigma), COUNT(*)
                FROM iterations
                WHERE run_id = ?
                GROUP BY phase, service, agent
                ORDER BY phase, service, agent
            ''', (run_id,))
            formatters = {"Mean": lambda v: f"{v:.4f}", "Min": lambda v: f"{v:.4f}", "Max": lambda v: f"{v:.4f}"}
            return self._format_tabular_report(
                f"Phase means for run {run_id}",
                ["Phase", "Service", "Agent", "Mean", "Min", "Max", "Iterations"],
                rows, formatters)
        except sqlite3.Error as e:
            return self._format_error("generating phase means report", e)

    def report_swap_events(self, run_id=None):
        """Every core swap executed by the global optimizer."""
        try:
            run_id = self._resolve_run(run_id)
            if isinstance(run_id, str):
                return run_id
            rows = self._execute_query('''
                SELECT rep, tick, from_service, to_service, estimated_gain, realized_gain
                FROM swaps
                WHERE run_id = ?
                ORDER BY rep, tick
            ''', (run_id,))
            if not rows:
                return f"No swap events in run {run_id}."
            formatters = {"Estimated": lambda v: f"{v:+.4f}",
                          "Realized": lambda v: "-" if v is None else f"{v:+.4f}"}
            return self._format_tabular_report(
                f"Swap events for run {run_id}",
                ["Rep", "Tick", "From", "To", "Estimated", "Realized"], rows, formatters)
        except sqlite3.Error as e:
            return self._format_error("generating swap events report", e)

    def report_action_histogram(self, run_id=None):
        """Count of chosen actions and their outcomes per agent."""
        try:
            run_id = self._resolve_run(run_id)
            if isinstance(run_id, str):
                return run_id
            rows = self._execute_query('''
                SELECT agent, action, outcome, COUNT(*)
                FROM actions
                WHERE run_id = ?
                GROUP BY agent, action, outcome
                ORDER BY agent, COUNT(*) DESC, action
            ''', (run_id,))
            return self._format_tabular_report(
                f"Action histogram for run {run_id}", ["Agent", "Action", "Outcome", "Count"], rows)
        except sqlite3.Error as e:
            return self._format_error("generating action histogram", e)

    def _resolve_run(self, run_id):
        if run_id is None:
            rows = self._execute_query("SELECT MAX(run_id) FROM runs")
            if not rows or rows[0][0] is None:
                return "No runs recorded."
            return rows[0][0]
        try:
            run_id = int(run_id)
        except ValueError:
            return f"Error: run id must be an integer, got '{run_id}'"
        if not self._execute_query("SELECT 1 FROM runs WHERE run_id = ?", (run_id,)):
            return f"Error: run {run_id} does not exist."
        return run_id

    def _execute_query(self, query, parameters=()):
        """
        Execute a parameterized SQL query and return the results.

        Args:
            query: SQL query string with ? placeholders
            parameters: Tuple of parameter values

        Returns:
            List of result rows
        """
        cursor = self.db.cursor()
        cursor.execute(query, parameters)
        return cursor.fetchall()

    def _format_tabular_report(self, title, headers, data, formatters=None):
        """
        Format rows into a fixed-width table under an underlined title.

        Args:
            title: Report title string
            headers: List of column header strings
            data: List of data rows (tuples or lists)
            formatters: Optional dict mapping column names to formatting functions

        Returns:
            Formatted report string
        """
        formatters = formatters or {}

        def render(header, value):
            return formatters[header](value) if header in formatters else str(value)

        cells = [[render(h, v) for h, v in zip(headers, row)] for row in data]
        widths = [max([len(h)] + [len(r[i]) for r in cells]) + 2 for i, h in enumerate(headers)]

        lines = [title, "=" * len(title), ""]
        lines.append("".join(h.ljust(w) for h, w in zip(headers, widths)))
        lines.append("-" * sum(widths))
        lines.extend("".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells)
        return "\n".join(lines) + "\n"

    def _format_error(self, action, exception):
        return f"Error {action}: {str(exception)}"
