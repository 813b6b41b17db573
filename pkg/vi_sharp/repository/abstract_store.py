from abc import ABC, abstractmethod
from typing import Generic, Iterator, Optional, TypeVar

RecordT = TypeVar("RecordT")


class AbstractStore(ABC, Generic[RecordT]):
    """Keyed persistence for records that are written once and read many times."""

    @abstractmethod
    def create(self, key: str, record: RecordT) -> RecordT:
        """Store ``record`` under ``key``, replacing any previous one."""

    @abstractmethod
    def get(self, key: str) -> Optional[RecordT]:
        """Return the record under ``key``, or None."""

    @abstractmethod
    def delete(self, key: str) -> bool:
        """Remove the record under ``key``; True if one existed."""

    @abstractmethod
    def keys(self) -> Iterator[str]:
        pass
