"""Backend adapter for a pretrained latent-inpainting diffusion model.

Wraps a Stable-Diffusion-style inpainting pipeline (via ``diffusers``)
behind the wire protocol: the VAE serves ENCODE/DECODE at scale 8, the
inpainting UNet serves EPS conditioned on the masked reference and the
prompt.  Depth requests need a separate anchored monocular model and must
be supplied by the caller as callables; without them the requests are
answered with an error.

This module imports torch/diffusers lazily: loading real weights requires
a model download, so it is exercised manually rather than by the test
suite (the echo backend covers protocol conformance).
"""

from __future__ import annotations

import hashlib

import numpy as np


class DiffusionBackend:
    def __init__(self, model_id: str, device: str = "cuda",
                 latent_size: int = 64, steps: int = 50,
                 depth_init=None, depth_refine=None):
        try:
            import torch
            from diffusers import AutoencoderKL, DDPMScheduler, UNet2DConditionModel
            from transformers import CLIPTextModel, CLIPTokenizer
        except ImportError as exc:  # pragma: no cover - optional extra
            raise RuntimeError(
                "the diffusion backend needs the 'diffusion' extra "
                "(pip install roomweave-bridge[diffusion])") from exc
        self._torch = torch
        self.device = device
        self.latent_size = latent_size
        self.vae = AutoencoderKL.from_pretrained(model_id, subfolder="vae").to(device)
        self.unet = UNet2DConditionModel.from_pretrained(
            model_id, subfolder="unet").to(device)
        self.tokenizer = CLIPTokenizer.from_pretrained(model_id, subfolder="tokenizer")
        self.text_encoder = CLIPTextModel.from_pretrained(
            model_id, subfolder="text_encoder").to(device)
        ddpm = DDPMScheduler.from_pretrained(model_id, subfolder="scheduler")
        full = ddpm.alphas_cumprod.numpy()
        stride = max(1, len(full) // steps)
        self._timesteps = np.arange(steps) * stride + stride - 1
        self.schedule = full[self._timesteps]
        self._prompt_cache: dict[str, object] = {}
        self._depth_init = depth_init
        self._depth_refine = depth_refine

    def hello(self) -> dict:
        return {
            "channels": 4,
            "scale": 8,
            "latent_size": self.latent_size,
            "alpha_bar": [float(a) for a in self.schedule],
            "concurrent": False,
            "max_batch": 1,
        }

    def _to_torch(self, arr, channels_first=True):
        t = self._torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32))
        if channels_first and t.ndim == 3:
            t = t.permute(2, 0, 1)
        return t[None].to(self.device)

    def encode(self, image: np.ndarray) -> np.ndarray:
        with self._torch.no_grad():
            x = self._to_torch(image * 2.0 - 1.0)
            lat = self.vae.encode(x).latent_dist.mode() * self.vae.config.scaling_factor
        return lat[0].permute(1, 2, 0).cpu().numpy()

    def decode(self, latent: np.ndarray) -> np.ndarray:
        with self._torch.no_grad():
            z = self._to_torch(latent) / self.vae.config.scaling_factor
            img = self.vae.decode(z).sample
        img = (img[0].permute(1, 2, 0).cpu().numpy() + 1.0) / 2.0
        return np.clip(img, 0.0, 1.0).astype(np.float32)

    def _embed(self, prompt: str):
        if prompt not in self._prompt_cache:
            tokens = self.tokenizer(prompt, padding="max_length",
                                    max_length=self.tokenizer.model_max_length,
                                    truncation=True, return_tensors="pt")
            with self._torch.no_grad():
                self._prompt_cache[prompt] = self.text_encoder(
                    tokens.input_ids.to(self.device))[0]
        return self._prompt_cache[prompt]

    def predict_epsilon(self, x, ref, mask, abar, prompt, view, window) -> np.ndarray:
        torch = self._torch
        t_idx = int(np.argmin(np.abs(self.schedule - abar)))
        timestep = torch.tensor([int(self._timesteps[t_idx])], device=self.device)
        with torch.no_grad():
            lat = self._to_torch(x)
            masked_ref = self._to_torch(ref)
            m = torch.from_numpy(np.ascontiguousarray(mask, np.float32))
            m = m[None, None].to(self.device)
            unet_in = torch.cat([lat, m, masked_ref], dim=1)
            eps = self.unet(unet_in, timestep,
                            encoder_hidden_states=self._embed(prompt)).sample
        return eps[0].permute(1, 2, 0).cpu().numpy().astype(np.float32)

    def depth_init(self, image, view):
        if self._depth_init is None:
            raise RuntimeError("no depth model attached to this backend")
        return np.asarray(self._depth_init(image), dtype=np.float32)

    def depth_refine(self, depth, anchor_depth, anchor_mask, view):
        if self._depth_refine is None:
            raise RuntimeError("no depth model attached to this backend")
        return np.asarray(
            self._depth_refine(depth, anchor_depth, anchor_mask), np.float32)

    def invert_token(self, images) -> str:
        # placeholder: a real deployment optimizes a token embedding from the
        # images and registers it with the tokenizer; the engine only needs
        # the resulting token string
        digest = hashlib.sha256(
            np.ascontiguousarray(images, dtype="<f4").tobytes()).hexdigest()
        return f"<style-{digest[:8]}>"
