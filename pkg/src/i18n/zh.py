STRINGS = {
    # Startup
    "loading_manifest": "正在加载清单 {path}...",
    "manifest_loaded": "  共 {total} 对（训练 {train}，测试 {test}）",
    "config_written": "完整配置已写入 {path}",
    "model_footprint": "  模型：方案 {scheme}，{params:,} 个参数（32 位存储 {mb:.1f} MB），描述子 {dim} 维",

    # Phases
    "phase_synth": "[{current}/{total}] 正在渲染合成场景（{n} 个地点）...",
    "phase_train": "[{current}/{total}] 正在训练 {steps} 步（批大小 {batch}，每步 {triplets} 个三元组）...",
    "phase_resume": "  从 {path} 的第 {step} 步继续训练",
    "phase_embed": "[{current}/{total}] 正在提取 {n} 张 {side} 图像的描述子...",
    "phase_sweep": "[{current}/{total}] 正在进行 {levels} 个北向误差等级的测试...",
    "phase_ablation": "[{current}/{total}] 消融实验：共 {runs} 次训练（方案 {schemes}；种子 {seeds}）...",
    "ablation_run_done": "  {scheme} 种子 {seed}：r@1 {r1:.2%}，损失 {first:.4f} -> {last:.4f}",
    "step_line": "  第 {step:>6} 步  第 {epoch:>3} 轮  损失 {loss:.6f}",

    # Results
    "synth_done": "合成数据已写入 {path}：训练 {train} 对 / 测试 {test} 对",
    "train_done": "训练在第 {step} 步结束：损失 {first:.4f} -> {last:.4f}",
    "checkpoint_saved": "检查点：{path}",
    "index_saved": "{n} x {dim} 的索引已写入 {path}",
    "orient_saved": "{view} U-V 图（{width}x{height}，{style}）已写入 {path}",
    "no_positions": "索引不含坐标，跳过定位评估",

    # Tables
    "table_recall_title": "检索召回率",
    "table_localization_title": "米级定位",
    "table_sweep_title": "召回率与北向误差",
    "table_query_title": "前 {k} 个卫星图块",
    "table_train_title": "训练摘要",
    "table_ablation_title": "方案消融（各种子中位数）",
    "table_checks_title": "消融检验（召回率百分点）",
    "col_metric": "指标",
    "col_k": "K",
    "col_recall": "召回率",
    "col_level": "误差（度）",
    "col_rank": "#",
    "col_id": "图块",
    "col_distance": "距离平方",
    "col_position": "坐标",
    "col_value": "数值",
    "col_scheme": "方案",
    "col_runs": "次数",
    "col_check": "检验项",
    "col_observed": "实测",
    "col_threshold": "阈值",
    "col_result": "结果",
    "row_queries": "查询数",
    "row_database": "数据库大小",
    "row_query_time": "平均查询耗时",
    "row_radius": "半径",
    "row_steps": "步数",
    "row_first_loss": "初始损失",
    "row_last_loss": "最终损失",
    "row_parameters": "参数量",
    "row_parameter_bytes": "参数存储",
    "na": "N/A",
    "check_pass": "通过",
    "check_fail": "未通过",
    "check_skipped": "跳过",
    "check_uv_gain": "方案 I 相对 RGB 基线的 r@1 提升（下限）",
    "check_scheme_gap": "方案 II 与方案 I 的 r@1 差距（上限）",
    "check_sweep_rise": "方案 I 误差扫描中 r@1 的最大回升（上限）",

    # Export
    "exported_json": "结果已导出至：{path}",
    "exported_csv": "结果已导出至：{path}",

    # Errors
    "error_validation": "输入无效：{error}",
    "error_io": "读写错误：{error}",
    "error_numeric": "数值错误：{error}",
}
