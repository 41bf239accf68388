import csv
import os

from src.harness.run_report import IterationRecord, RunReport


class IterationCSVImporter:
    def __init__(self, scenario_name=None):
        """Initialize the importer; the scenario name defaults to the file's parent directory."""
        self.scenario_name = scenario_name

        # Define the expected structure for the iterations CSV
        self.expected_columns = {
            'required': ['rep', 'phase', 'iteration', 'service', 'agent', 'phi_sigma'],
            'optional': ['tick']
        }

    def validate_csv_structure(self, csv_file):
        """Validate that the CSV file structure matches the iteration table structure."""
        try:
            with open(csv_file, 'r', newline='', encoding='utf-8') as f:
                reader = csv.reader(f)
                header = next(reader, None)
                if header is None:
                    return False, "CSV file is empty"

                missing_columns = [col for col in self.expected_columns['required'] if col not in header]
                if missing_columns:
                    return False, f"Missing required columns: {', '.join(missing_columns)}"

                all_valid_columns = self.expected_columns['required'] + self.expected_columns['optional']
                unknown_columns = [col for col in header if col not in all_valid_columns]
                if unknown_columns:
                    return False, f"Unknown columns found: {', '.join(unknown_columns)}"

                return True, "CSV structure is valid"
        except OSError as e:
            return False, f"Error validating CSV: {str(e)}"

    def import_iterations_csv(self, csv_file):
        """
        Read an iterations CSV back into a RunReport holding only iteration records.

        Args:
            csv_file: Path of an iterations.csv written by a scenario run

        Returns:
            The RunReport

        Raises:
            ValueError: Structure or a row value is invalid
        """
        valid, message = self.validate_csv_structure(csv_file)
        if not valid:
            raise ValueError(f"{csv_file}: {message}")

        records = []
        with open(csv_file, 'r', newline='', encoding='utf-8') as f:
            for line_number, row in enumerate(csv.DictReader(f), start=2):
                try:
                    records.append(IterationRecord(int(row['rep']), int(row['phase']), int(row['iteration']),
                                                   row['service'], row['agent'], float(row['phi_sigma']),
                                                   int(row.get('tick') or 0)))
                except (TypeError, ValueError) as e:
                    raise ValueError(f"{csv_file}, line {line_number}: {e}") from e

        name = self.scenario_name or os.path.basename(os.path.dirname(os.path.abspath(csv_file)))
        phases = sorted({r.phase for r in records})
        per_phase = [len({r.iteration for r in records if r.phase == p}) for p in phases]
        report = RunReport(name, {}, "", [], len(phases), per_phase)
        report.iterations.extend(records)
        return report
