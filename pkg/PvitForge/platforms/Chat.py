from PvitForge.utils.exceptions import MalformedResponse

from .base import HttpAPI


class ChatAPI(HttpAPI):
    """OpenAI-compatible chat completions for caption, complete and the model under test."""

    def to_wire(self, messages: list) -> list:
        wire = []
        for message in messages:
            parts = []
            for part in message["content"]:
                if part["type"] == "image":
                    url = f"data:image/png;base64,{self.image_b64(part['image'])}"
                    parts.append({"type": "image_url", "image_url": {"url": url}})
                else:
                    parts.append({"type": "text", "text": part["text"]})
            wire.append({"role": message["role"], "content": parts})
        return wire

    async def request(self, capability: str, payload: dict) -> dict:
        body = {
            "model": self.model,
            "messages": self.to_wire(payload["messages"]),
            "temperature": payload.get("temperature", 0),
        }
        if payload.get("seed") is not None:
            body["seed"] = payload["seed"]
        data = await self.post("/chat/completions", body)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponse("chat completion without choices[0].message.content")
        if isinstance(content, list):
            content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
        if not isinstance(content, str):
            raise MalformedResponse("chat completion content is not text")
        return {"text": content}
