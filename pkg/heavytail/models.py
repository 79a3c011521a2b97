from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import relationship

from heavytail.database import Base


# -----------------------------
# EXPERIMENT RUN
# -----------------------------
class ExperimentRun(Base):
    __tablename__ = "experiment_runs"
    id = Column(Integer, primary_key=True, index=True)
    created_at = Column(DateTime)

    dist = Column(String)  # e.g. "alpha-stable"
    param = Column(String)  # e.g. "1.2:0:1:0"
    master_seed = Column(String)  # unsigned 64-bit, too wide for SQLite INTEGER
    scenarios = Column(Integer)
    hypothesis = Column(String)  # H0, H1, unknown
    level = Column(Float)  # Wilson level of err_low / err_high

    # full ExperimentSpec as JSON, so a stored run re-exports unchanged
    spec_json = Column(Text)

    cells = relationship("CellRecord", back_populates="run", order_by="CellRecord.position")


# -----------------------------
# CELL RESULT
# -----------------------------
class CellRecord(Base):
    __tablename__ = "cell_results"
    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"))
    position = Column(Integer)  # order within the report

    m = Column(Integer)
    n = Column(Integer)
    q = Column(Float)
    rejections = Column(Integer)
    scenarios = Column(Integer)
    errors = Column(Integer)

    err = Column(Float)
    err_low = Column(Float)
    err_high = Column(Float)
    mean_stat = Column(Float)  # NULL when every scenario failed
    std_stat = Column(Float)

    run = relationship("ExperimentRun", back_populates="cells")
