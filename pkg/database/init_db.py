import logging
import os
import sqlite3

from src.harness.run_report import RunReport

logger = logging.getLogger(__name__)

# Results database file name inside a run's output directory
RESULTS_DB_NAME = 'results.db'


def results_db_path(out_dir):
    return os.path.join(out_dir, RESULTS_DB_NAME)


def init_results_db(db_path):
    """Create the results schema if it does not exist and return an open connection."""
    conn = sqlite3.connect(db_path)
    cursor = conn.cursor()

    cursor.executescript('''
    -- One row per scenario run (all repetitions)
    CREATE TABLE IF NOT EXISTS runs (
        run_id INTEGER PRIMARY KEY AUTOINCREMENT,
        scenario TEXT NOT NULL,
        fingerprint TEXT NOT NULL,
        seeds TEXT NOT NULL,
        phases INTEGER NOT NULL,
        created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
    );

    CREATE TABLE IF NOT EXISTS iterations (
        run_id INTEGER NOT NULL,
        rep INTEGER NOT NULL,
        phase INTEGER NOT NULL,
        iteration INTEGER NOT NULL,
        service TEXT NOT NULL,
        agent TEXT NOT NULL,
        phi_sigma FLOAT NOT NULL,
        tick INTEGER NOT NULL,
        FOREIGN KEY (run_id) REFERENCES runs(run_id)
    );

    CREATE TABLE IF NOT EXISTS swaps (
        run_id INTEGER NOT NULL,
        rep INTEGER NOT NULL,
        tick INTEGER NOT NULL,
        from_service TEXT NOT NULL,
        to_service TEXT NOT NULL,
        estimated_gain FLOAT NOT NULL,
        realized_gain FLOAT,
        FOREIGN KEY (run_id) REFERENCES runs(run_id)
    );

    CREATE TABLE IF NOT EXISTS actions (
        run_id INTEGER NOT NULL,
        rep INTEGER NOT NULL,
        tick INTEGER NOT NULL,
        service TEXT NOT NULL,
        agent TEXT NOT NULL,
        action TEXT NOT NULL,
        outcome TEXT NOT NULL,
        FOREIGN KEY (run_id) REFERENCES runs(run_id)
    );
    ''')
    conn.commit()
    return conn


def record_report(conn, report: RunReport):
    """
    Store one RunReport in the results database.

    Args:
        conn: Connection returned by init_results_db
        report: The finished run

    Returns:
        The new run_id
    """
    cursor = conn.cursor()
    cursor.execute(
        "INSERT INTO runs (scenario, fingerprint, seeds, phases) VALUES (?, ?, ?, ?)",
        (report.scenario, report.fingerprint, ",".join(str(s) for s in report.seeds), report.phases),
    )
    run_id = cursor.lastrowid
    cursor.executemany(
        "INSERT INTO iterations VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
        [(run_id, r.rep, r.phase, r.iteration, r.service, r.agent, r.phi_sigma, r.tick) for r in report.iterations],
    )
    cursor.executemany(
        "INSERT INTO swaps VALUES (?, ?, ?, ?, ?, ?, ?)",
        [(run_id, s.rep, s.tick, s.from_service, s.to_service, s.estimated_gain, s.realized_gain)
         for s in report.swaps],
    )
    cursor.executemany(
        "INSERT INTO actions VALUES (?, ?, ?, ?, ?, ?, ?)",
        [(run_id, a.rep, a.tick, a.service, a.agent, a.action, a.outcome) for a in report.actions],
    )
    conn.commit()
    logger.info("Recorded run %d (%s) in results database", run_id, report.scenario)
    return run_id
