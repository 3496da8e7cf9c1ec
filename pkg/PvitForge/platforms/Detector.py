from .base import HttpAPI


class DetectAPI(HttpAPI):
    """Open-vocabulary detector and face detector: `POST /detect {image, prompt}`."""

    async def request(self, capability: str, payload: dict) -> dict:
        body = {
            "image": self.image_b64(payload["image"]),
            "prompt": payload.get("prompt", "face"),
        }
        return await self.post("/detect", body)
