"""
Aplicación principal: línea de comandos del pipeline de generación de asserts.

mine -> build-vocab -> pretrain-prep -> pretrain -> finetune -> generate -> evaluate -> augment
"""
import argparse
import json
import sys
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import torch

from config.settings import load_run_config, typed_config
from core.augmenter import augment_test_file, augmentation_source
from core.checkpoint import load_checkpoint, read_manifest
from core.evaluator import build_report, evaluate, render_report
from core.generator import AssertGenerator, GenerationConfig
from core.java_parser import parse_java
from core.miner import CorpusMiner, FocalIndex, mine_directory
from core.model import ModelConfig, build_model
from core.noising import CorruptionConfig, load_documents, prepare_pretraining_corpus
from core.tokenizer import Vocabulary, train_vocab
from core.trainer import OptimizerConfig, Trainer, TrainingConfig
from utils.errors import AssertForgeError, ConfigError
from utils.io import list_files, read_jsonl, write_jsonl
from utils.java_scope import infer_focal_class
from utils.logging_config import logger, set_log_level
from utils.manifest import RunManifest

VARIANTS = ("scratch", "english", "code", "english+code")
AUGMENT_TOP_K = 10


def _read_pairs(path: str, vocab: Optional[Vocabulary] = None) -> List[Tuple[List[int], List[int]]]:
    """Pares de ids desde JSONL: listas de ids (preentrenamiento) o texto (TAPs)."""
    pairs = []
    for record in read_jsonl(path):
        source, target = record["source"], record["target"]
        if isinstance(source, str):
            if vocab is None:
                raise ConfigError(f"{path} contiene texto y no se indicó --vocab")
            source, target = list(vocab.encode(source).ids), list(vocab.encode(target).ids)
        pairs.append((list(source), list(target)))
    return pairs


class AssertForgeApp:
    """
    Aplicación principal: cada subcomando es un método que recibe la
    configuración resuelta y devuelve el directorio de salida.
    """

    def __init__(self, args: argparse.Namespace):
        self.args = args
        overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        self.config = load_run_config(args.config, overrides)
        self.seed = int(self.config["seed"])
        self.jobs = int(self.config["jobs"])
        torch.manual_seed(self.seed)
        logger.info(f"Subcomando {args.command} (semilla {self.seed}, {self.jobs} procesos)")

    def _vocab(self) -> Vocabulary:
        if not self.config.get("vocab"):
            raise ConfigError("Falta --vocab")
        return Vocabulary.load(self.config["vocab"])

    def _generation_config(self, k: Optional[int] = None) -> GenerationConfig:
        values = dict(self.config)
        values["beam_width"] = values.get("beam") or values["beam_width"]
        # Sin --k explícito, k no supera la anchura del haz
        values["k"] = values.get("k") or min(int(k or values["top_k"]), int(values["beam_width"]))
        return typed_config(GenerationConfig, values)

    def mine(self) -> str:
        result = mine_directory(
            self.config["src_dir"],
            self.config["out_dir"],
            focal_dir=self.config.get("focal_dir"),
            seed=self.seed,
            jobs=self.jobs,
            with_focal=not self.config.get("no_focal"),
        )
        train, valid, test = result.split.counts()
        logger.info(f"TAPs: train={train:,} valid={valid:,} test={test:,}")
        return self.config["out_dir"]

    def build_vocab(self) -> str:
        texts: List[str] = []
        for path in self.config["train"]:
            if path.endswith(".jsonl"):
                for record in read_jsonl(path):
                    texts.extend(record[key] for key in ("source", "target") if isinstance(record.get(key), str))
            else:
                texts.extend(p.read_text(encoding="utf-8", errors="replace") for p in list_files(path, ""))
        vocab = train_vocab(texts, int(self.config["vocab_size"]))
        out = Path(self.config["out_dir"]) / "vocab.txt"
        vocab.save(out)
        logger.info(f"Vocabulario de {len(vocab)} tokens guardado en {out}")
        return self.config["out_dir"]

    def pretrain_prep(self) -> str:
        vocab = self._vocab()
        cfg = typed_config(CorruptionConfig, {**self.config, "seed": self.seed})
        docs = load_documents(self.config["corpus"], cfg.mode, cfg.max_non_ascii)
        if not docs:
            raise ConfigError(f"No hay documentos en {self.config['corpus']}")
        records = list(prepare_pretraining_corpus(docs, vocab, cfg, int(self.config["max_len"]), self.config.get("epoch")))
        n_valid = max(1, int(len(records) * float(self.config["valid_fraction"]))) if len(records) > 1 else 0
        out = Path(self.config["out_dir"])
        write_jsonl(out / "train.jsonl", records[:len(records) - n_valid])
        write_jsonl(out / "valid.jsonl", records[len(records) - n_valid:] or records)
        logger.info(f"Pares de preentrenamiento ({cfg.mode}): {len(records) - n_valid} train, {n_valid} valid")
        return self.config["out_dir"]

    def _trainer(self, vocab: Vocabulary, chain: str) -> Trainer:
        opt_cfg = typed_config(OptimizerConfig, self.config)
        train_cfg = typed_config(TrainingConfig, {**self.config, "seed": self.seed})
        init = self.config.get("init_checkpoint")
        if init:
            checkpoint = load_checkpoint(init, vocab.digest)
            model = checkpoint.model
        else:
            model_cfg = typed_config(ModelConfig, {**self.config, "vocab_size": len(vocab)})
            model = build_model(model_cfg, seed=self.seed, float64=train_cfg.float64)
        return Trainer(model, opt_cfg, train_cfg, vocab_digest=vocab.digest, chain=chain)

    def pretrain(self) -> str:
        vocab = self._vocab()
        mode = self.config["mode"]
        init = self.config.get("init_checkpoint")
        previous = read_manifest(init).get("chain", "") if init else ""
        chain = f"{previous}+{mode}" if previous else mode
        if chain not in VARIANTS:
            raise ConfigError(f"Cadena de preentrenamiento no soportada: {chain}")
        trainer = self._trainer(vocab, chain)
        result = trainer.train(_read_pairs(self.config["train"]), _read_pairs(self.config["valid"]), self.config["out_dir"])
        logger.info(f"Preentrenamiento {chain}: mejor valid={result.best_valid_loss:.4f} (época {result.best_epoch})")
        return self.config["out_dir"]

    def finetune(self) -> str:
        vocab = self._vocab()
        variant = self.config["variant"]
        init = self.config.get("init_checkpoint")
        if variant == "scratch" and init:
            raise ConfigError("La variante scratch no admite --init-checkpoint")
        if variant != "scratch":
            if not init:
                raise ConfigError(f"La variante {variant} necesita --init-checkpoint")
            chain = read_manifest(init).get("chain", "")
            if chain != variant:
                raise ConfigError(f"El checkpoint inicial tiene la cadena '{chain}', se esperaba '{variant}'")
        trainer = self._trainer(vocab, f"{variant}>finetune")
        result = trainer.train(_read_pairs(self.config["train"], vocab), _read_pairs(self.config["valid"], vocab), self.config["out_dir"])
        logger.info(f"Finetuning {variant}: mejor valid={result.best_valid_loss:.4f} (época {result.best_epoch})")
        return self.config["out_dir"]

    def generate(self) -> str:
        generator = AssertGenerator.from_checkpoint(self.config["checkpoint"], self._vocab(), self._generation_config())
        records = generator.generate_records(read_jsonl(self.config["input"]), jobs=self.jobs)
        write_jsonl(self.config["out"], records)
        return str(Path(self.config["out"]).parent)

    def evaluate(self) -> str:
        valid_loss = self.config.get("valid_loss")
        if self.config.get("candidates"):
            records = list(read_jsonl(self.config["candidates"]))
            targets_path = self.config.get("targets")
            targets = [r["target"] for r in read_jsonl(targets_path)] if targets_path else [r["target"] for r in records]
            report = build_report([r["candidates"] for r in records], targets, valid_loss)
        elif self.config.get("checkpoint") and self.config.get("input"):
            checkpoint_dir = self.config["checkpoint"]
            if valid_loss is None and "valid_loss" in read_manifest(checkpoint_dir):
                valid_loss = float(read_manifest(checkpoint_dir)["valid_loss"])
            generator = AssertGenerator.from_checkpoint(checkpoint_dir, self._vocab(), self._generation_config())
            report = evaluate(generator, list(read_jsonl(self.config["input"])), valid_loss, jobs=self.jobs)
        else:
            raise ConfigError("evaluate necesita --candidates o bien --checkpoint y --input")
        report.save(self.config["out"])
        print(render_report(report))
        return str(Path(self.config["out"]).parent)

    def _augment_candidates(self, test_files: Sequence[Path]) -> Dict[str, Dict[str, List[str]]]:
        if self.config.get("candidates"):
            by_file: Dict[str, Dict[str, List[str]]] = defaultdict(dict)
            for record in read_jsonl(self.config["candidates"]):
                key = Path(record["file"]).name
                by_file[key][record["method"]] = record["candidates"]
            return by_file
        if not self.config.get("checkpoint"):
            raise ConfigError("augment necesita --candidates o --checkpoint")

        generator = AssertGenerator.from_checkpoint(self.config["checkpoint"], self._vocab(), self._generation_config(AUGMENT_TOP_K))
        focal_classes = CorpusMiner(self.jobs).parse_tree(self.config.get("focal_dir"))
        index = FocalIndex(m for c in focal_classes for m in c.methods)
        by_file = defaultdict(dict)
        for path in test_files:
            source = path.read_bytes()
            for java_class in parse_java(source, str(path)):
                for method in java_class.methods:
                    if not method.is_test:
                        continue
                    start, end = method.span
                    text = augmentation_source(source[start:end].decode("utf-8"), index, java_class.name)
                    by_file[path.name][method.name] = generator.generate(text)
        return by_file

    def augment(self) -> str:
        tests_dir = self.config["tests_dir"]
        out_dir = Path(self.config["out_dir"])
        test_files = list_files(tests_dir, ".java")
        candidates = self._augment_candidates(test_files)

        focal_sources: Dict[str, str] = {}
        if self.config.get("focal_dir"):
            for path in list_files(self.config["focal_dir"], ".java"):
                focal_sources[path.stem] = path.read_text(encoding="utf-8")

        rows = []
        for path in test_files:
            by_method = candidates.get(path.name)
            if not by_method:
                continue
            focal_source = focal_sources.get(infer_focal_class(path.stem))
            relative = path.relative_to(tests_dir) if Path(tests_dir).is_dir() else Path(path.name)
            results = augment_test_file(str(path), by_method, focal_source, str(out_dir / relative))
            rows.extend(r.report_row() for r in results)

        report = Path(self.config.get("report") or out_dir / "augment_report.json")
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(json.dumps(rows, indent=2), encoding="utf-8")
        chosen = sum(1 for r in rows if r["assert"] != "-")
        logger.info(f"Aumento: {chosen}/{len(rows)} tests con assert")
        return str(out_dir)

    def run(self) -> None:
        """Ejecuta el subcomando y escribe el manifiesto de la ejecución."""
        inputs = [self.config.get(k) for k in ("src_dir", "focal_dir", "corpus", "vocab", "valid", "input",
                                                "checkpoint", "init_checkpoint", "candidates", "targets", "tests_dir")]
        train = self.config.get("train")
        inputs.extend(train if isinstance(train, list) else [train])
        manifest = RunManifest.start(self.args.command, self.config, [p for p in inputs if p], self.seed)
        handler = getattr(self, self.args.command.replace("-", "_"))
        out_dir = handler()
        manifest.finish(out_dir)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Fichero de configuración clave=valor")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--log-level", dest="log_level")
    common.add_argument("--float64", action="store_true", default=None)

    parser = argparse.ArgumentParser(prog="assert-forge", description="Generación de asserts para tests unitarios Java")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine", parents=[common], help="Minar pares Test-Assert")
    p.add_argument("--src-dir", required=True)
    p.add_argument("--focal-dir")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-focal", action="store_true", default=None)

    p = sub.add_parser("build-vocab", parents=[common], help="Entrenar el vocabulario BPE")
    p.add_argument("--train", required=True, action="append")
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("pretrain-prep", parents=[common], help="Preparar pares de eliminación de ruido")
    p.add_argument("--mode", required=True, choices=("english", "code"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mask-rate", type=float)
    p.add_argument("--lambda", dest="poisson_lambda", type=float)
    p.add_argument("--delete-rate", type=float)
    p.add_argument("--rotate-fraction", type=float)
    p.add_argument("--max-len", type=int)
    p.add_argument("--epoch", type=int)
    p.add_argument("--valid-fraction", type=float, default=0.05)

    for name, help_text in (("pretrain", "Preentrenar el modelo"), ("finetune", "Ajustar el modelo sobre TAPs")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--train", required=True)
        p.add_argument("--valid", required=True)
        p.add_argument("--vocab", required=True)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--init-checkpoint")
        p.add_argument("--batch-size", type=int)
        p.add_argument("--max-epochs", type=int)
        p.add_argument("--max-steps", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--warmup-steps", type=int)
        p.add_argument("--base-lr", type=float)
        if name == "pretrain":
            p.add_argument("--mode", required=True, choices=("english", "code"))
        else:
            p.add_argument("--variant", choices=VARIANTS, default="scratch")

    p = sub.add_parser("generate", parents=[common], help="Generar asserts con beam search")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--beam", type=int)

    p = sub.add_parser("evaluate", parents=[common], help="Evaluar predicciones")
    p.add_argument("--candidates")
    p.add_argument("--targets")
    p.add_argument("--checkpoint")
    p.add_argument("--vocab")
    p.add_argument("--input")
    p.add_argument("--valid-loss", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--beam", type=int)

    p = sub.add_parser("augment", parents=[common], help="Añadir asserts a tests existentes")
    p.add_argument("--tests-dir", required=True)
    p.add_argument("--candidates")
    p.add_argument("--checkpoint")
    p.add_argument("--vocab")
    p.add_argument("--focal-dir")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--report")
    p.add_argument("--beam", type=int)

    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Ejecuta la línea de comandos.

    Returns:
        int: 0 si todo fue bien, 1 ante un error del dominio, 2 ante un error de uso.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0

    if args.log_level:
        set_log_level(args.log_level)
    try:
        AssertForgeApp(args).run()
    except AssertForgeError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    return 0


def run() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    run()
