from .base import HttpAPI


class SimilarityAPI(HttpAPI):
    """Long-text image/text similarity: `POST /similarity {image, text} -> {score}`."""

    async def request(self, capability: str, payload: dict) -> dict:
        body = {"image": self.image_b64(payload["image"]), "text": payload["text"]}
        return await self.post("/similarity", body)
