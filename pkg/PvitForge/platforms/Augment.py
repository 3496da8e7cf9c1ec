from .base import HttpAPI


class AugmentAPI(HttpAPI):
    """Identity-preserving generator: `POST /augment {image, n, seed} -> {images}`."""

    async def request(self, capability: str, payload: dict) -> dict:
        body = {
            "image": self.image_b64(payload["image"]),
            "n": payload["n"],
            "seed": payload["seed"],
        }
        return await self.post("/augment", body)
