import datetime
import json
import os
import re
from typing import Iterator, Optional

from loguru import logger
from pydantic import ValidationError

from vi_sharp.core.config import settings
from vi_sharp.models.schemas import OracleCertificate
from vi_sharp.repository.abstract_store import AbstractStore

_UNSAFE = re.compile(r"[^A-Za-z0-9_.-]")


class CertificateStore(AbstractStore[OracleCertificate]):
    """Oracle certificates cached as one JSON file per problem key.

    Certificates minted by a different tool version are treated as missing.
    """

    def __init__(self, directory: Optional[str] = None):
        if directory is None:
            directory = settings.CERTIFICATE_DIR
        self.directory = directory
        os.makedirs(self.directory, exist_ok=True)

    def _path(self, key: str) -> str:
        return os.path.join(self.directory, _UNSAFE.sub("_", key) + ".json")

    def create(self, key: str, record: OracleCertificate) -> OracleCertificate:
        created_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
        document = {
            "key": key,
            "created_at": created_at,
            "certificate": record.model_dump(mode="json"),
        }
        with open(self._path(key), "w") as file:
            json.dump(document, file, indent=2)
        logger.debug(f"Certificate for {key} saved to {self._path(key)}")
        return record

    def _load(self, key: str) -> Optional[dict]:
        path = self._path(key)
        if not os.path.exists(path):
            return None
        try:
            with open(path) as file:
                return json.load(file)
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Ignoring unreadable certificate {path}: {e}")
            return None

    def get(self, key: str) -> Optional[OracleCertificate]:
        document = self._load(key)
        if document is None:
            return None
        try:
            certificate = OracleCertificate.model_validate(document["certificate"])
        except (KeyError, ValidationError) as e:
            logger.warning(f"Ignoring malformed certificate for {key}: {e}")
            return None
        if certificate.tool_version != settings.TOOL_VERSION:
            logger.info(
                f"Certificate for {key} was minted by {certificate.tool_version}; "
                f"ignoring it under {settings.TOOL_VERSION}"
            )
            return None
        return certificate

    def delete(self, key: str) -> bool:
        path = self._path(key)
        if not os.path.exists(path):
            return False
        os.remove(path)
        return True

    def keys(self) -> Iterator[str]:
        for name in sorted(os.listdir(self.directory)):
            if name.endswith(".json"):
                document = self._load(name[: -len(".json")])
                if document is not None:
                    yield document.get("key", name[: -len(".json")])

    def delete_older_than_minutes(self, minutes: int) -> int:
        """Delete certificates created more than ``minutes`` ago; returns how many."""
        cutoff = datetime.datetime.now(datetime.timezone.utc) - datetime.timedelta(
            minutes=minutes
        )
        deleted = 0
        for key in list(self.keys()):
            document = self._load(key)
            if document is None:
                continue
            try:
                created_at = datetime.datetime.fromisoformat(document["created_at"])
            except (KeyError, TypeError, ValueError) as e:
                logger.warning(f"Skipping certificate {key} without a usable created_at: {e}")
                continue
            if created_at < cutoff and self.delete(key):
                deleted += 1
        return deleted
