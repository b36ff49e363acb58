from sqlalchemy import Column, Integer, String, DateTime, Float, ForeignKey, Text
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker, relationship, declarative_base
from datetime import datetime
import enum

from utils.config import DATABASE_URL

connect_args = {"check_same_thread": False} if DATABASE_URL.startswith("sqlite") else {}
engine = create_engine(DATABASE_URL, connect_args=connect_args)

SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
Base = declarative_base()


def get_db():
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()


class RunKind(str, enum.Enum):
    POINT = "point"
    SWEEP = "sweep"
    DYNAMIC = "dynamic"


class RunStatus(str, enum.Enum):
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True)
    created_at = Column(DateTime, default=datetime.now)
    kind = Column(String(16), nullable=False)
    config_json = Column(Text, nullable=False)
    status = Column(String(16), default=RunStatus.RUNNING.value, nullable=False)
    error = Column(Text, nullable=True)

    # Relationship with PointResult
    points = relationship("PointResult", back_populates="run", cascade="all, delete-orphan",
                          order_by="PointResult.id")

    def __str__(self):
        return f"run {self.id} ({self.kind})"


class PointResult(Base):
    __tablename__ = "point_results"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id", ondelete="CASCADE"), nullable=False, index=True)
    variant = Column(String(16), nullable=False)
    vcs = Column(Integer, nullable=False)
    fault_count = Column(Integer, nullable=False)
    placement = Column(String(16), nullable=False)
    pattern = Column(String(16), nullable=False)
    rate = Column(Float, nullable=False)
    # seed number, or "mean" for the per-rate aggregate row
    seed = Column(String(16), nullable=False)
    avg_latency = Column(Float, nullable=True)
    throughput = Column(Float, nullable=False)
    drops = Column(Float, nullable=False)
    avg_hops = Column(Float, nullable=True)
    ud_fraction = Column(Float, nullable=True)

    # Relationship with ExperimentRun
    run = relationship("ExperimentRun", back_populates="points")

    def __str__(self):
        return f"{self.variant} rate={self.rate} seed={self.seed}"
