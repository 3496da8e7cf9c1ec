import asyncio
import base64

import aiohttp
from aiohttp import client_exceptions

from PvitForge.pipeline.types import ImageRef
from PvitForge.utils.exceptions import (
    BackendUnreachable,
    MalformedResponse,
    QuotaExceeded,
)


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


class HttpAPI:
    """JSON-over-HTTP plumbing shared by the remote capability clients."""

    def __init__(self, store, url: str, api_key: str = "", timeout: float = 60.0, model: str = ""):
        self.store = store
        self.base = url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self.model = model

    def headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def image_b64(self, ref: dict) -> str:
        return b64(self.store.read_bytes(ImageRef.from_dict(ref)))

    async def post(self, route: str, payload: dict) -> dict:
        timeout = aiohttp.ClientTimeout(total=self.timeout)
        try:
            async with aiohttp.ClientSession(headers=self.headers(), timeout=timeout) as ses:
                async with ses.post(f"{self.base}{route}", json=payload) as resp:
                    if resp.status == 429:
                        raise QuotaExceeded(f"{route}: quota exceeded")
                    if resp.status >= 500:
                        raise BackendUnreachable(f"{route}: HTTP {resp.status}")
                    if resp.status >= 400:
                        body = await resp.text()
                        raise MalformedResponse(f"{route}: HTTP {resp.status} {body[:200]}")
                    try:
                        return await resp.json(content_type=None)
                    except ValueError:
                        raise MalformedResponse(f"{route}: response is not JSON")
        except (client_exceptions.ClientConnectorError, client_exceptions.ClientOSError):
            raise BackendUnreachable(f"Can not reach the host {self.base}!")
        except client_exceptions.ClientError as e:
            raise BackendUnreachable(f"{route}: {type(e).__name__}")
        except asyncio.TimeoutError:
            raise BackendUnreachable(f"{route}: timed out after {self.timeout}s")
