"""
Run registry for the simulator.
Contains the model, session management, and repository functions.
"""

import json
import logging
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Dict, List, Optional

from sqlalchemy import Column, DateTime, Integer, String, Text, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker, Session

from sim_config import RunStatus, settings

logger = logging.getLogger(__name__)

# Database base
Base = declarative_base()


# ========================= MODELS =========================

class RunRecord(Base):
    """One CLI invocation."""
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    command = Column(String(50), nullable=False)
    preset = Column(String(50), nullable=True)
    config_hash = Column(String(12), nullable=False)
    seed = Column(Integer, nullable=True)
    status = Column(String(20), default=RunStatus.RUNNING)
    started_at = Column(DateTime, default=datetime.now)
    finished_at = Column(DateTime, nullable=True)
    outputs = Column(Text, nullable=True)  # JSON list of written files
    summary = Column(Text, nullable=True)  # JSON mapping of headline numbers
    error = Column(Text, nullable=True)

    def outputs_list(self) -> List[str]:
        return json.loads(self.outputs) if self.outputs else []

    def summary_dict(self) -> Dict[str, Any]:
        return json.loads(self.summary) if self.summary else {}


# ========================= DATABASE ENGINE =========================

class DatabaseManager:
    """Database connection and session manager (one instance per URL)."""

    _instances: Dict[str, "DatabaseManager"] = {}

    def __new__(cls, database_url: Optional[str] = None):
        url = database_url or settings.database_url
        if url not in cls._instances:
            instance = super(DatabaseManager, cls).__new__(cls)
            instance._engine = None
            instance._session_factory = None
            instance.url = url
            cls._instances[url] = instance
        return cls._instances[url]

    def __init__(self, database_url: Optional[str] = None):
        if self._engine is None:
            self._init_engine()

    def _init_engine(self):
        """Initialize database engine and session factory."""
        try:
            if self.url.startswith("sqlite"):
                self._engine = create_engine(self.url)
            else:
                # Use connection pooling for server databases
                self._engine = create_engine(
                    self.url,
                    pool_size=10,
                    max_overflow=20,
                    pool_pre_ping=True,
                    pool_recycle=3600
                )
            self._session_factory = sessionmaker(bind=self._engine, expire_on_commit=False)
            Base.metadata.create_all(self._engine)
            logger.debug(f"Run registry configured for: {self.url}")

        except Exception as e:
            logger.error(f"Database configuration error: {e}")
            raise

    @contextmanager
    def get_session(self):
        """Get database session with automatic cleanup."""
        if self._session_factory is None:
            self._init_engine()

        session = self._session_factory()
        try:
            yield session
            session.commit()
        except Exception as e:
            session.rollback()
            logger.error(f"Database session error: {e}")
            raise
        finally:
            session.close()


# ========================= REPOSITORY FUNCTIONS =========================

class RunRepository:
    """Run registry repository functions."""

    @staticmethod
    def create_run(db: Session, command: str, config_hash: str, seed: Optional[int] = None,
                   preset: Optional[str] = None) -> RunRecord:
        """Register a started run."""
        run = RunRecord(command=command, config_hash=config_hash, seed=seed, preset=preset,
                        status=RunStatus.RUNNING)
        db.add(run)
        db.flush()
        return run

    @staticmethod
    def finish_run(db: Session, run_id: int, outputs: List[str],
                   summary: Optional[Dict[str, Any]] = None) -> Optional[RunRecord]:
        """Mark a run as succeeded."""
        run = db.query(RunRecord).filter(RunRecord.id == run_id).first()
        if run:
            run.status = RunStatus.SUCCEEDED
            run.finished_at = datetime.now()
            run.outputs = json.dumps(outputs)
            run.summary = json.dumps(summary or {}, default=float)
            db.flush()
        return run

    @staticmethod
    def fail_run(db: Session, run_id: int, error: str) -> Optional[RunRecord]:
        """Mark a run as failed."""
        run = db.query(RunRecord).filter(RunRecord.id == run_id).first()
        if run:
            run.status = RunStatus.FAILED
            run.finished_at = datetime.now()
            run.error = error
            db.flush()
        return run

    @staticmethod
    def recent_runs(db: Session, limit: int = 20, command: Optional[str] = None) -> List[RunRecord]:
        """Most recent runs first."""
        query = db.query(RunRecord)
        if command:
            query = query.filter(RunRecord.command == command)
        return query.order_by(RunRecord.id.desc()).limit(limit).all()


# ========================= CONVENIENCE FUNCTIONS =========================

def get_db_session(database_url: Optional[str] = None):
    """Get database session."""
    return DatabaseManager(database_url).get_session()
