from contextlib import contextmanager
from functools import lru_cache
from typing import Iterator

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

DEFAULT_DATABASE_URL = "sqlite:///heavytail.db"

Base = declarative_base()


@lru_cache(maxsize=None)
def get_engine(url: str) -> Engine:
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


def init_db(url: str) -> sessionmaker:
    # models must be imported before create_all so their tables are registered
    from heavytail import models  # noqa: F401

    engine = get_engine(url)
    Base.metadata.create_all(bind=engine)
    return sessionmaker(bind=engine, autoflush=False, autocommit=False)


@contextmanager
def get_db(url: str) -> Iterator[Session]:
    SessionLocal = init_db(url)
    db = SessionLocal()
    try:
        yield db
        db.commit()
    except Exception:
        db.rollback()
        raise
    finally:
        db.close()
