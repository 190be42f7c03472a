"""Pluggable LLM backends: a deterministic mock and a generic remote client."""

from __future__ import annotations

from dataclasses import dataclass

import httpx

from .errors import BackendError


class LLMBackend:
    """Interface: complete(prompt) -> completion text, plus an identity string."""

    name = "backend"
    version = "0"

    @property
    def identity(self) -> str:
        return f"{self.name}/{self.version}"

    def complete(self, prompt: str) -> str:
        raise NotImplementedError


@dataclass
class MockBackend(LLMBackend):
    """Deterministic echo backend: identical prompt, identical completion.

    Echoing the prompt makes output-stage detection exercisable end to end
    without a real model: whatever the prompt smuggles in shows up in the
    completion.
    """

    preamble: str = "You asked about"

    name = "mock"
    version = "1"

    def complete(self, prompt: str) -> str:
        return f"{self.preamble}: {prompt}\nThis is a deterministic mock completion."


@dataclass
class RemoteBackend(LLMBackend):
    """Single-endpoint remote contract: POST {"prompt": ...} -> {"completion": ...}."""

    url: str
    timeout_s: float = 30.0

    name = "remote"
    version = "1"

    @property
    def identity(self) -> str:
        return f"{self.name}/{self.version} ({self.url})"

    def complete(self, prompt: str) -> str:
        try:
            response = httpx.post(self.url, json={"prompt": prompt}, timeout=self.timeout_s)
            response.raise_for_status()
            payload = response.json()
            return str(payload["completion"])
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise BackendError(f"LLM backend at {self.url} failed: {exc}") from exc
